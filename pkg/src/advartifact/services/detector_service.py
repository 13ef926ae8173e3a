"""Detector service functions.

Z-scoring, the combined logistic-regression detector, single-feature
threshold scores, ROC/AUC evaluation and the undecided-class rule.
"""

import logging
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np
from scipy.special import expit

from advartifact.domain.artifacts import ArtifactFeatures
from advartifact.domain.attack import AttackName
from advartifact.domain.detector import (
    UNDECIDED,
    DetectorEvaluation,
    DetectorKind,
    DetectorModel,
    FeatureRecord,
    LogRegConfig,
    RocCurve,
    SampleSet,
    ZScoreParams,
)
from advartifact.domain.exceptions import (
    DegenerateFeatureError,
    EmptyInputError,
    EmptyValidationError,
    InvalidSpecError,
    MissingSetError,
    NonFiniteLossError,
    NotCorrectlyClassifiedError,
    SingleClassError,
    ValidationError,
)
from advartifact.domain.network import NetworkModel
from advartifact.domain.seeding import derive_seed, generator
from advartifact.domain.tensor import Tensor, as_tensor
from advartifact.services import artifact_service, attack_service, network_service

logger = logging.getLogger(__name__)

FeatureLike = ArtifactFeatures | Sequence[float] | Tensor


def _as_matrix(features: Iterable[FeatureLike] | Tensor) -> Tensor:
    rows = [f.vector if isinstance(f, ArtifactFeatures) else f for f in features]
    matrix = as_tensor(rows, context="features")
    if matrix.ndim != 2 or matrix.shape[1] != 2:
        raise ValidationError(f"features must be 2-vectors, got shape {matrix.shape}")
    return matrix


def zscore_fit(features: Iterable[FeatureLike]) -> ZScoreParams:
    """Per-feature mean and population standard deviation.

    Raises:
        DegenerateFeatureError: If there are fewer than two samples or a
            feature has zero variance
    """
    matrix = _as_matrix(features)
    if len(matrix) < 2:
        raise DegenerateFeatureError(0, "need at least 2 samples")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    for index, value in enumerate(std):
        if value <= 0:
            raise DegenerateFeatureError(index)
    return ZScoreParams(mean=(float(mean[0]), float(mean[1])), std=(float(std[0]), float(std[1])))


def zscore_apply(params: ZScoreParams, v: Any) -> Tensor:
    """Z-score one 2-vector or an [n, 2] matrix."""
    values = v.vector if isinstance(v, ArtifactFeatures) else v
    return (as_tensor(values, context="features") - np.asarray(params.mean)) / np.asarray(params.std)


def logistic_loss(weights: Any, bias: float, z: Tensor, labels: Any, l2_penalty: float) -> float:
    """Mean logistic loss plus ``l2_penalty * ||w||^2``."""
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    logits = z @ w + bias
    data_loss = np.mean(np.logaddexp(0.0, logits) - y * logits)
    return float(data_loss + l2_penalty * np.dot(w, w))


def logistic_gradient(
    weights: Any, bias: float, z: Tensor, labels: Any, l2_penalty: float
) -> tuple[Tensor, float]:
    """Gradient of :func:`logistic_loss` w.r.t. (weights, bias)."""
    w = np.asarray(weights, dtype=np.float64)
    residual = expit(z @ w + bias) - np.asarray(labels, dtype=np.float64)
    return z.T @ residual / len(z) + 2.0 * l2_penalty * w, float(np.mean(residual))


def train_logreg(
    features: Iterable[FeatureLike], labels: Sequence[int], config: LogRegConfig
) -> DetectorModel:
    """Fit the combined detector by full-batch gradient descent from zero.

    Args:
        features: (uncertainty, -log density) pairs
        labels: 1 for adversarial, 0 otherwise
        config: Iterations, learning rate and L2 penalty

    Returns:
        DetectorModel holding the z-score parameters of the training set

    Raises:
        SingleClassError: If only one label value is present
        DegenerateFeatureError: If a feature is constant
        NonFiniteLossError: If the loss diverges
    """
    y = np.asarray(labels, dtype=np.int64)
    if set(np.unique(y).tolist()) != {0, 1}:
        raise SingleClassError("logistic regression needs both labels 0 and 1")
    matrix = _as_matrix(features)
    params = zscore_fit(matrix)
    z = zscore_apply(params, matrix)

    w, b = np.zeros(2), 0.0
    initial = logistic_loss(w, b, z, y, config.l2_penalty)
    for iteration in range(config.iters):
        dw, db = logistic_gradient(w, b, z, y, config.l2_penalty)
        w, b = w - config.learning_rate * dw, b - config.learning_rate * db
        if not np.all(np.isfinite(w)) or not np.isfinite(b):
            raise NonFiniteLossError(iteration, 0, float("nan"))
    final = logistic_loss(w, b, z, y, config.l2_penalty)
    if not np.isfinite(final):
        raise NonFiniteLossError(config.iters, 0, final)
    logger.info("Detector trained on %d samples: loss %.4f -> %.4f", len(y), initial, final)
    return DetectorModel(
        zscore=params,
        weights=(float(w[0]), float(w[1])),
        bias=float(b),
        initial_loss=initial,
        final_loss=final,
    )


def score(detector: DetectorModel, features: FeatureLike) -> float:
    """sigmoid(w . z + b) of the z-scored feature pair."""
    z = zscore_apply(detector.zscore, features)
    return float(expit(float(np.dot(np.asarray(detector.weights), z)) + detector.bias))


def threshold_scores(
    kind: DetectorKind, features: ArtifactFeatures, detector: DetectorModel | None = None
) -> float:
    """Scalar score ranking a sample as adversarial.

    Raises:
        ValidationError: If kind is combined and no detector is given
    """
    match kind:
        case DetectorKind.UNCERTAINTY:
            return features.uncertainty
        case DetectorKind.DENSITY:
            return features.neg_log_density
        case DetectorKind.COMBINED:
            if detector is None:
                raise ValidationError("combined scores need a fitted detector")
            return score(detector, features)
    raise ValidationError(f"unknown detector kind: {kind}")


def roc_curve(scores: Sequence[float] | Tensor, labels: Sequence[int] | Tensor) -> RocCurve:
    """ROC by sweeping the distinct scores in descending order.

    Tied scores form one vertex. AUC is the trapezoidal area, equal to
    P(s+ > s-) + 0.5 * P(s+ == s-).

    Raises:
        SingleClassError: If only one label value is present
    """
    s = as_tensor(scores, context="scores")
    y = np.asarray(labels, dtype=np.int64)
    positives, negatives = np.sort(s[y == 1]), np.sort(s[y == 0])
    if len(positives) == 0 or len(negatives) == 0:
        raise SingleClassError("ROC needs both positive and negative samples")

    thresholds = np.unique(s)[::-1]
    tpr = (len(positives) - np.searchsorted(positives, thresholds, side="left")) / len(positives)
    fpr = (len(negatives) - np.searchsorted(negatives, thresholds, side="left")) / len(negatives)
    fpr = np.concatenate([[0.0], fpr])
    tpr = np.concatenate([[0.0], tpr])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(
        thresholds=(float("inf"), *(float(t) for t in thresholds)),
        fpr=tuple(float(v) for v in fpr),
        tpr=tuple(float(v) for v in tpr),
        auc=auc,
    )


def _attack_order(names: Iterable[str]) -> list[str]:
    known = [str(a) for a in AttackName]
    return sorted(set(names), key=lambda n: (known.index(n) if n in known else len(known), n))


def evaluate_detector(
    records: Sequence[FeatureRecord], kind: DetectorKind, detector: DetectorModel | None = None
) -> DetectorEvaluation:
    """Per-attack and overall ROC curves; adversarial rows are positives.

    Negatives for one attack are that attack's noisy rows plus the normal
    rows of the samples it attacked. Overall negatives are every normal
    and noisy row.

    Raises:
        MissingSetError: If normal, adversarial or an attack's noisy rows are absent
    """
    by_set: dict[SampleSet, list[FeatureRecord]] = {s: [] for s in SampleSet}
    for record in records:
        by_set[record.sample_set].append(record)
    for required in (SampleSet.NORMAL, SampleSet.ADVERSARIAL):
        if not by_set[required]:
            raise MissingSetError(str(required))

    def curve(positives: list[FeatureRecord], negatives: list[FeatureRecord]) -> RocCurve:
        rows = positives + negatives
        values = [threshold_scores(kind, r.features, detector) for r in rows]
        return roc_curve(values, [1] * len(positives) + [0] * len(negatives))

    per_attack: dict[str, RocCurve] = {}
    for attack in _attack_order(r.attack for r in by_set[SampleSet.ADVERSARIAL]):
        adversarial = [r for r in by_set[SampleSet.ADVERSARIAL] if r.attack == attack]
        noisy = [r for r in by_set[SampleSet.NOISY] if r.attack == attack]
        if not noisy:
            raise MissingSetError(str(SampleSet.NOISY), attack)
        ids = {r.sample_id for r in adversarial}
        normal = [r for r in by_set[SampleSet.NORMAL] if r.sample_id in ids]
        if not normal:
            raise MissingSetError(str(SampleSet.NORMAL), attack)
        per_attack[attack] = curve(adversarial, normal + noisy)

    overall = curve(by_set[SampleSet.ADVERSARIAL], by_set[SampleSet.NORMAL] + by_set[SampleSet.NOISY])
    return DetectorEvaluation(kind=kind, per_attack=per_attack, overall=overall)


def training_set(records: Iterable[FeatureRecord]) -> tuple[list[ArtifactFeatures], list[int]]:
    """Normal rows labelled 0 and adversarial rows labelled 1; noisy rows are left out."""
    features, labels = [], []
    for record in records:
        if record.sample_set is SampleSet.NOISY:
            continue
        features.append(record.features)
        labels.append(int(record.sample_set is SampleSet.ADVERSARIAL))
    return features, labels


def detector_split(
    sample_ids: Iterable[int], train_fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Seeded disjoint split of sample ids into (train, eval).

    Both parts are non-empty whenever there are at least two ids.

    Raises:
        InvalidSpecError: If train_fraction is outside (0, 1)
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidSpecError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    ids = np.array(sorted(set(sample_ids)), dtype=np.int64)
    if len(ids) < 2:
        return ids.tolist(), []
    count = min(max(int(round(train_fraction * len(ids))), 1), len(ids) - 1)
    shuffled = generator(seed, "detector-split").permutation(ids)
    return sorted(shuffled[:count].tolist()), sorted(shuffled[count:].tolist())


def percentile(values: Sequence[float] | Tensor, P: float) -> float:
    """P-th percentile with linear interpolation between order statistics.

    Raises:
        EmptyInputError: If values is empty
        InvalidSpecError: If P is outside [0, 100]
    """
    if not 0.0 <= P <= 100.0:
        raise InvalidSpecError(f"percentile must lie in [0, 100], got {P}")
    array = as_tensor(values, context="values")
    if array.size == 0:
        raise EmptyInputError("percentile of an empty set")
    return float(np.percentile(array, P))


def uncertainty_threshold(
    model: NetworkModel,
    valid_x: Any,
    valid_y: Any,
    P: float,
    epsilon: float,
    T: int,
    seed: int,
) -> float:
    """Uncertainty cutoff: the P-th percentile over FGSM samples of the validation set.

    Args:
        model: Trained network
        valid_x: Validation inputs
        valid_y: Integer validation labels
        P: Percentile in [0, 100]
        epsilon: FGSM magnitude
        T: Stochastic passes per uncertainty estimate
        seed: Seed for the noisy samples and dropout masks

    Raises:
        EmptyValidationError: If no validation sample is correctly classified
    """
    labels = np.asarray(valid_y, dtype=np.int64)
    onehot = np.eye(model.num_classes)
    values = []
    for index, (x, label) in enumerate(zip(valid_x, labels, strict=True)):
        try:
            result = attack_service.fgsm(model, x, onehot[label], epsilon, seed=derive_seed(seed, index))
        except NotCorrectlyClassifiedError:
            continue
        values.append(artifact_service.uncertainty(model, result.x_adv, T, derive_seed(seed, "u", index)))
    if not values:
        raise EmptyValidationError("no correctly classified validation samples")
    cutoff = percentile(values, P)
    logger.info("Uncertainty cutoff at P%g over %d samples: %.6g", P, len(values), cutoff)
    return cutoff


def classify_with_undecided(model: NetworkModel, cutoff: float, x: Any, T: int, seed: int) -> int:
    """Predicted class, or UNDECIDED when U(x) > cutoff."""
    if artifact_service.uncertainty(model, x, T, seed) > cutoff:
        return UNDECIDED
    return network_service.predict(model, x)
