"""Artifact feature service functions.

Kernel density of last-hidden-layer features under the predicted class
and Monte-Carlo dropout uncertainty, plus the diagnostics built on them.
"""

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np
from scipy.special import logsumexp

from advartifact.domain.artifacts import (
    ArtifactFeatures,
    ClassFeatureBank,
    DensityWalk,
    DensityWalkRecord,
    FeatureDirections,
)
from advartifact.domain.attack import BimParams
from advartifact.domain.exceptions import (
    EmptyClassError,
    EmptyInputError,
    InvalidGridError,
    InvalidSpecError,
    NotCorrectlyClassifiedError,
    ShapeMismatchError,
)
from advartifact.domain.network import DropoutMode, NetworkModel
from advartifact.domain.seeding import generator
from advartifact.domain.tensor import Tensor, as_tensor
from advartifact.services import network_service
from advartifact.services.attack_service import clip_to_ball

logger = logging.getLogger(__name__)

_GRID_SPAN = (-2.0, 2.0)
_MEDIAN_SAMPLE = 1000


def build_feature_bank(
    model: NetworkModel,
    train_x: Any,
    train_labels: Any,
    *,
    cap: int | None = None,
    seed: int = 0,
) -> ClassFeatureBank:
    """Group phi(x) of the training points by label.

    Args:
        model: Trained network
        train_x: Training inputs
        train_labels: Integer labels in [0, num_classes)
        cap: Keep at most this many points per class (seeded subsample)
        seed: Seed for the subsample

    Returns:
        Bank without bandwidth

    Raises:
        EmptyClassError: If a class has no training points
    """
    labels = np.asarray(train_labels, dtype=np.int64)
    features = network_service.hidden_features(model, train_x)
    if len(labels) != len(features):
        raise ShapeMismatchError(len(features), len(labels), "training labels")
    per_class = []
    for class_index in range(model.num_classes):
        rows = np.flatnonzero(labels == class_index)
        if len(rows) == 0:
            raise EmptyClassError(class_index)
        if cap is not None and len(rows) > cap:
            rows = np.sort(generator(seed, "bank", class_index).choice(rows, size=cap, replace=False))
        per_class.append(features[rows])
    bank = ClassFeatureBank(tuple(per_class))
    logger.info("Feature bank sizes per class: %s", bank.sizes)
    return bank


def _squared_distances(a: Tensor) -> Tensor:
    norms = np.einsum("ij,ij->i", a, a)
    return np.maximum(norms[:, None] + norms[None, :] - 2.0 * (a @ a.T), 0.0)


def default_bandwidth_grid(bank: ClassFeatureBank, num: int = 20, seed: int = 0) -> list[float]:
    """Log-spaced candidates over [1e-2, 1e2] times the median pairwise distance."""
    pooled = np.concatenate(bank.features, axis=0)
    if len(pooled) > _MEDIAN_SAMPLE:
        pooled = pooled[generator(seed, "median").choice(len(pooled), _MEDIAN_SAMPLE, replace=False)]
    distances = np.sqrt(_squared_distances(pooled)[np.triu_indices(len(pooled), k=1)])
    median = float(np.median(distances)) if distances.size else 0.0
    scale = median if median > 0 else 1.0
    return [float(v) for v in scale * np.logspace(*_GRID_SPAN, num=num)]


def loo_log_likelihood(bank: ClassFeatureBank, sigma: float) -> float:
    """Total leave-one-out log-likelihood of the bank under a Gaussian KDE.

    Each point is scored against the other points of its class with the
    normalized kernel exp(-d^2 / sigma^2) / (sqrt(pi) * sigma)^D.
    """
    dim = bank.hidden_dim
    log_norm = dim * np.log(np.sqrt(np.pi) * sigma)
    total = 0.0
    for matrix in bank.features:
        n = len(matrix)
        exponent = -_squared_distances(matrix) / sigma**2
        np.fill_diagonal(exponent, -np.inf)
        total += float(np.sum(logsumexp(exponent, axis=1)) - n * (np.log(n - 1) + log_norm))
    return total


def fit_bandwidth(bank: ClassFeatureBank, candidate_grid: Sequence[float]) -> float:
    """Grid value maximizing the leave-one-out log-likelihood.

    Ties go to the smaller bandwidth.

    Raises:
        InvalidGridError: If the grid is empty or has non-positive entries
        EmptyClassError: If a class has fewer than two points
    """
    grid = [float(s) for s in candidate_grid]
    if not grid:
        raise InvalidGridError("bandwidth grid is empty")
    if any(not np.isfinite(s) or s <= 0 for s in grid):
        raise InvalidGridError(f"bandwidth grid must be positive: {grid}")
    for class_index, size in enumerate(bank.sizes):
        if size < 2:
            raise EmptyClassError(class_index, size, required=2)

    best_sigma, best_score = min(grid), -np.inf
    for sigma in sorted(grid):
        score = loo_log_likelihood(bank, sigma)
        logger.debug("bandwidth %.6g: loo log-likelihood %.6f", sigma, score)
        if score > best_score:
            best_sigma, best_score = sigma, score
    logger.info("Selected bandwidth %.6g", best_sigma)
    return best_sigma


def density_estimate(bank: ClassFeatureBank, phi_x: Any, class_index: int) -> float:
    """log sum_i exp(-||phi_x - phi(x_i)||^2 / sigma^2) over the class bank.

    Raises:
        UnknownClassError: If class_index is not in the bank
        UnfittedBankError: If the bank has no bandwidth
    """
    points = bank.class_features(class_index)
    sigma = bank.sigma
    query = as_tensor(phi_x, context="phi(x)")
    if query.shape != (bank.hidden_dim,):
        raise ShapeMismatchError((bank.hidden_dim,), query.shape, "phi(x)")
    diff = points - query
    squared = np.einsum("ij,ij->i", diff, diff)
    return float(logsumexp(-squared / sigma**2))


def predictive_variance(samples: Any) -> float:
    """Mean over output dimensions of the per-dimension variance of T samples.

    Raises:
        InvalidSpecError: If fewer than two samples are given
    """
    ys = as_tensor(samples, context="samples")
    if ys.ndim != 2 or ys.shape[0] < 2:
        raise InvalidSpecError(f"need T >= 2 sample vectors, got shape {ys.shape}")
    shifted = ys - ys[0]
    variance = np.mean(shifted**2, axis=0) - np.mean(shifted, axis=0) ** 2
    return float(np.mean(np.maximum(variance, 0.0)))


def uncertainty(model: NetworkModel, x: Any, T: int, seed: int) -> float:
    """MC-dropout uncertainty U(x) from T sampled forward passes.

    Raises:
        InvalidSpecError: If T < 2
    """
    if T < 2:
        raise InvalidSpecError(f"uncertainty needs T >= 2, got {T}")
    return predictive_variance(network_service.sample_predictions(model, x, T, seed))


def extract_features(
    model: NetworkModel, bank: ClassFeatureBank, x: Any, T: int, seed: int
) -> ArtifactFeatures:
    """Uncertainty and negative log density under the predicted class."""
    probs, hidden = network_service.forward(model, x, DropoutMode.deterministic())
    predicted = int(np.argmax(probs))
    return ArtifactFeatures(
        uncertainty=uncertainty(model, x, T, seed),
        neg_log_density=-density_estimate(bank, hidden, predicted),
        predicted_class=predicted,
    )


def density_walk(
    model: NetworkModel, bank: ClassFeatureBank, x: Any, y_onehot: Any, params: BimParams
) -> DensityWalk:
    """Log-density trace along a fixed-length BIM run.

    Iteration 0 is the unperturbed sample, so a run of n steps yields
    n + 1 records. Densities are taken under the source class and under
    the class predicted after the last step.

    Raises:
        NotCorrectlyClassifiedError: If the model misclassifies x
    """
    sample = as_tensor(x, context="walk input")
    y = as_tensor(y_onehot, context="label")
    label = int(np.argmax(y))
    source = network_service.predict(model, sample)
    if source != label:
        raise NotCorrectlyClassifiedError(label, source)

    iterates = [sample]
    current = sample
    for _ in range(params.iterations):
        gradient = network_service.input_gradient(model, current, y)
        stepped = current + params.epsilon_step * np.sign(gradient)
        current = np.clip(clip_to_ball(stepped, sample, params.epsilon_clip), 0.0, 1.0)
        iterates.append(current)

    hidden = network_service.hidden_features(model, np.stack(iterates))
    predictions = [network_service.predict(model, it) for it in iterates]
    final = predictions[-1]
    crossover = next((i for i, p in enumerate(predictions) if p != source), None)
    records = tuple(
        DensityWalkRecord(
            iteration=i,
            log_density_source=density_estimate(bank, hidden[i], source),
            log_density_adv=density_estimate(bank, hidden[i], final),
        )
        for i in range(len(iterates))
    )
    return DensityWalk(source_class=source, final_class=final, crossover=crossover, records=records)


def feature_directions(
    normal: Sequence[ArtifactFeatures],
    noisy: Sequence[ArtifactFeatures],
    adversarial: Sequence[ArtifactFeatures],
) -> FeatureDirections:
    """Fractions of samples whose adversarial features moved the expected way.

    The three sequences are aligned: entry k of each belongs to one sample.

    Raises:
        EmptyInputError: If there are no samples
        ShapeMismatchError: If the sequences differ in length
    """
    if not adversarial:
        raise EmptyInputError("feature_directions needs at least one sample")
    if not len(normal) == len(noisy) == len(adversarial):
        raise ShapeMismatchError(len(adversarial), (len(normal), len(noisy)), "aligned feature sets")

    def fraction(pairs: Sequence[tuple[float, float]]) -> float:
        return float(np.mean([a > b for a, b in pairs]))

    u_adv = [f.uncertainty for f in adversarial]
    nld_adv = [f.neg_log_density for f in adversarial]
    return FeatureDirections(
        count=len(adversarial),
        uncertainty_up_vs_normal=fraction(list(zip(u_adv, [f.uncertainty for f in normal], strict=True))),
        density_down_vs_normal=fraction(list(zip(nld_adv, [f.neg_log_density for f in normal], strict=True))),
        uncertainty_up_vs_noisy=fraction(list(zip(u_adv, [f.uncertainty for f in noisy], strict=True))),
        density_down_vs_noisy=fraction(list(zip(nld_adv, [f.neg_log_density for f in noisy], strict=True))),
    )
