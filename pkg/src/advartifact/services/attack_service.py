"""Attack service functions.

Adversarial sample crafting against the deterministic network, the
perturbation-matched noisy counterparts and batch statistics.
"""

import logging
from collections.abc import Sequence
from dataclasses import replace
from typing import Any

import numpy as np

from advartifact.domain.attack import (
    AttackKind,
    AttackName,
    AttackResult,
    AttackStats,
    BimParams,
    CwL0Params,
    FgsmParams,
    JsmaParams,
    perturbation_norms,
)
from advartifact.domain.exceptions import (
    DivergenceError,
    EmptyInputError,
    InvalidSpecError,
    NoAdmissiblePairError,
    NotCorrectlyClassifiedError,
    ShapeMismatchError,
)
from advartifact.domain.network import NetworkModel
from advartifact.domain.seeding import generator
from advartifact.domain.tensor import Tensor, as_tensor, require_shape, require_unit_box
from advartifact.services import network_service

logger = logging.getLogger(__name__)

# atanh is singular at the box edges
CW_BOX_SHRINK = 1e-6


def _prepare(model: NetworkModel, x: Any) -> Tensor:
    sample = as_tensor(x, context="attack input")
    require_shape(sample, model.input_shape, "attack input")
    require_unit_box(sample, "attack input")
    return sample


def _true_label(model: NetworkModel, x: Tensor, y_onehot: Any) -> tuple[int, Tensor]:
    y = as_tensor(y_onehot, context="label")
    require_shape(y, (model.num_classes,), "one-hot label")
    label = int(np.argmax(y))
    predicted = network_service.predict(model, x)
    if predicted != label:
        raise NotCorrectlyClassifiedError(label, predicted)
    return label, y


def _check_target(model: NetworkModel, x: Tensor, target: int, true_label: int | None) -> int:
    predicted = network_service.predict(model, x)
    if true_label is not None and predicted != true_label:
        raise NotCorrectlyClassifiedError(true_label, predicted)
    source = predicted if true_label is None else true_label
    if not 0 <= target < model.num_classes:
        raise InvalidSpecError(f"target {target} outside [0, {model.num_classes})")
    if target == source:
        raise InvalidSpecError(f"target must differ from the true class {source}")
    return source


def _finish(
    model: NetworkModel,
    kind: AttackName,
    x: Tensor,
    x_adv: Tensor,
    true_label: int,
    iterations: int,
    seed: int,
    target: int | None = None,
) -> AttackResult:
    adv_label = network_service.predict(model, x_adv)
    success = adv_label == target if target is not None else adv_label != true_label
    l2_norm, l0_count = perturbation_norms(x, x_adv)
    return AttackResult(
        kind=kind,
        x=x,
        x_adv=x_adv,
        x_noisy=noisy_counterpart(x, x_adv, kind, seed),
        true_label=true_label,
        adv_label=adv_label,
        success=bool(success),
        l2_norm=l2_norm,
        l0_count=l0_count,
        iterations=iterations,
        target=target,
    )


def signed_step(x: Tensor, gradient: Tensor, epsilon: float) -> Tensor:
    """``clamp_[0,1](x + epsilon * sign(gradient))`` with sign(0) = 0."""
    return np.clip(x + epsilon * np.sign(gradient), 0.0, 1.0)


def clip_to_ball(candidate: Tensor, center: Tensor, radius: float) -> Tensor:
    """Project ``candidate`` onto the L-infinity ball of ``radius`` around ``center``."""
    return np.clip(candidate, center - radius, center + radius)


def fgsm(
    model: NetworkModel, x: Any, y_onehot: Any, epsilon: float, *, seed: int = 0
) -> AttackResult:
    """Fast gradient sign method.

    Args:
        model: Target network
        x: Correctly classified sample in [0, 1]
        y_onehot: True label, one-hot
        epsilon: Step magnitude
        seed: Seed for the matched noisy sample

    Returns:
        AttackResult with ``iterations == 1``

    Raises:
        ShapeMismatchError: If x or y_onehot has the wrong shape
        NotCorrectlyClassifiedError: If the model already misclassifies x
    """
    params = FgsmParams(epsilon)
    sample = _prepare(model, x)
    label, y = _true_label(model, sample, y_onehot)
    gradient = network_service.input_gradient(model, sample, y)
    x_adv = signed_step(sample, gradient, params.epsilon)
    return _finish(model, AttackName.FGSM, sample, x_adv, label, 1, seed)


def bim(
    model: NetworkModel, x: Any, y_onehot: Any, kind: AttackKind, *, seed: int = 0
) -> AttackResult:
    """Basic iterative method, variant A (early stop) or B (fixed iterations).

    Each step moves by epsilon_step along the loss-gradient sign, projects
    onto the epsilon_clip ball around x and clamps to [0, 1].

    Raises:
        InvalidSpecError: If kind is not BIM-A or BIM-B
        NotCorrectlyClassifiedError: If the model already misclassifies x
    """
    if kind.name not in (AttackName.BIM_A, AttackName.BIM_B):
        raise InvalidSpecError(f"bim expects bim-a or bim-b, got {kind.name}")
    params = kind.params
    assert isinstance(params, BimParams)
    sample = _prepare(model, x)
    label, y = _true_label(model, sample, y_onehot)
    early_stop = kind.name is AttackName.BIM_A

    x_adv = sample.copy()
    iterations = 0
    for _ in range(params.iterations):
        gradient = network_service.input_gradient(model, x_adv, y)
        stepped = x_adv + params.epsilon_step * np.sign(gradient)
        x_adv = np.clip(clip_to_ball(stepped, sample, params.epsilon_clip), 0.0, 1.0)
        iterations += 1
        if early_stop and network_service.predict(model, x_adv) != label:
            break
    logger.debug("%s finished after %d iteration(s)", kind.name, iterations)
    return _finish(model, kind.name, sample, x_adv, label, iterations, seed)


def saliency_map(d_probs: Tensor, target: int) -> Tensor:
    """Adversarial saliency of every feature for increasing ``target``.

    With alpha the target row of the softmax Jacobian and beta the sum of
    the other rows, S is 0 where alpha < 0 or beta > 0 and alpha * |beta|
    elsewhere.
    """
    alpha = d_probs[target]
    beta = d_probs.sum(axis=0) - alpha
    saliency = alpha * np.abs(beta)
    return np.where((alpha < 0) | (beta > 0), 0.0, saliency)


def select_pair(saliency: Tensor, domain: Tensor) -> tuple[int, int]:
    """Feature pair in ``domain`` maximizing S[i] + S[j].

    Ties go to the lower index.

    Raises:
        NoAdmissiblePairError: If fewer than two features remain or every
            remaining saliency is zero
    """
    candidates = np.flatnonzero(domain)
    if len(candidates) < 2 or not np.any(saliency[candidates] > 0):
        raise NoAdmissiblePairError(0)
    order = candidates[np.argsort(-saliency[candidates], kind="stable")]
    first, second = int(order[0]), int(order[1])
    return min(first, second), max(first, second)


def jsma(
    model: NetworkModel,
    x: Any,
    target: int,
    theta: float,
    max_fraction: float,
    *,
    true_label: int | None = None,
    seed: int = 0,
) -> AttackResult:
    """Targeted saliency-map attack, increasing features only.

    Raises:
        InvalidSpecError: If target equals the true class
        NotCorrectlyClassifiedError: If true_label is given and x is misclassified
    """
    params = JsmaParams(theta, max_fraction)
    sample = _prepare(model, x)
    source = _check_target(model, sample, target, true_label)

    flat = sample.ravel().copy()
    original = sample.ravel()
    domain = flat < 1.0
    iterations = 0
    while network_service.predict(model, flat.reshape(sample.shape)) != target:
        if np.count_nonzero(flat != original) / flat.size > params.max_fraction:
            break
        d_probs, _ = network_service.class_jacobians(model, flat.reshape(sample.shape))
        try:
            i, j = select_pair(saliency_map(d_probs, target), domain)
        except NoAdmissiblePairError:
            logger.debug("jsma: no admissible pair at iteration %d", iterations)
            break
        flat[[i, j]] = np.minimum(flat[[i, j]] + params.theta, 1.0)
        domain &= flat < 1.0
        iterations += 1
    x_adv = flat.reshape(sample.shape)
    return _finish(model, AttackName.JSMA, sample, x_adv, source, iterations, seed, target)


def to_tanh_space(x: Tensor) -> Tensor:
    """omega = atanh(2x - 1) after shrinking x into the open box."""
    shrunk = np.clip(x, CW_BOX_SHRINK, 1.0 - CW_BOX_SHRINK)
    return np.arctanh(2.0 * shrunk - 1.0)


def from_tanh_space(omega: Tensor) -> Tensor:
    return 0.5 * (np.tanh(omega) + 1.0)


def _margin_coefficients(target: int) -> Any:
    def coefficients(logits: Tensor) -> Tensor:
        others = logits.copy()
        others[target] = -np.inf
        coeffs = np.zeros_like(logits)
        coeffs[int(np.argmax(others))] = 1.0
        coeffs[target] -= 1.0
        return coeffs

    return coefficients


def cw_objective(
    model: NetworkModel, omega: Tensor, x: Tensor, target: int, params: CwL0Params
) -> tuple[float, Tensor]:
    """Objective ||x' - x||^2 + c * max(max_{i!=t} Z_i - Z_t, -kappa) and its gradient in omega."""
    x_prime = from_tanh_space(omega)
    logits, margin_grad = network_service.logit_gradient(model, x_prime, _margin_coefficients(target))
    margin = float(np.max(np.delete(logits, target)) - logits[target])
    distance = x_prime - x
    value = float(np.sum(distance * distance)) + params.c * max(margin, -params.kappa)
    grad_x = 2.0 * distance
    if margin > -params.kappa:
        grad_x = grad_x + params.c * margin_grad
    return value, grad_x * 0.5 * (1.0 - np.tanh(omega) ** 2)


def cw_l0(
    model: NetworkModel,
    x: Any,
    target: int,
    params: CwL0Params,
    *,
    true_label: int | None = None,
    seed: int = 0,
) -> AttackResult:
    """Tanh-reparameterized hinge attack followed by gradient-based pixel restriction.

    Runs ``params.steps`` fixed-size descent steps on omega, then undoes
    every change whose margin-gradient magnitude is below
    ``grad_threshold * max|grad|`` or whose size is below ``min_change``.
    A non-finite objective yields a failed result equal to x.

    Raises:
        InvalidSpecError: If target equals the true class
        NotCorrectlyClassifiedError: If true_label is given and x is misclassified
    """
    sample = _prepare(model, x)
    source = _check_target(model, sample, target, true_label)
    omega = to_tanh_space(sample)
    try:
        for step in range(params.steps):
            value, gradient = cw_objective(model, omega, sample, target, params)
            if not np.isfinite(value) or not np.all(np.isfinite(gradient)):
                raise DivergenceError(step, value)
            omega = omega - params.step_size * gradient
    except DivergenceError as e:
        logger.warning("cw: %s; reporting a failed attack", e)
        return _finish(model, AttackName.CW, sample, sample.copy(), source, e.step, seed, target)

    unrestricted = from_tanh_space(omega)
    _, margin_grad = network_service.logit_gradient(model, unrestricted, _margin_coefficients(target))
    magnitude = np.abs(margin_grad)
    keep = magnitude >= params.grad_threshold * float(magnitude.max())
    keep &= np.abs(unrestricted - sample) >= params.min_change
    x_adv = np.clip(np.where(keep, unrestricted, sample), 0.0, 1.0)
    return _finish(model, AttackName.CW, sample, x_adv, source, params.steps, seed, target)


def gaussian_perturbation(shape: Sequence[int], l2_norm: float, seed: int) -> Tensor:
    """Standard Gaussian noise rescaled to exactly ``l2_norm``."""
    noise = generator(seed, "gaussian").standard_normal(tuple(shape))
    norm = float(np.linalg.norm(noise.ravel()))
    if l2_norm == 0.0 or norm == 0.0:
        return np.zeros(tuple(shape))
    return noise * (l2_norm / norm)


def noisy_counterpart(x: Any, x_adv: Any, attack_kind: AttackName, seed: int) -> Tensor:
    """Random sample matched to the adversarial perturbation.

    FGSM/BIM: Gaussian noise with the same L2 norm, clamped to [0, 1].
    JSMA/C&W: as many pixels as were changed, chosen without replacement
    and each set to 0 or 1. A pixel already at the drawn value takes the
    other one, so every chosen pixel changes.

    Raises:
        ShapeMismatchError: If x and x_adv differ in shape
    """
    original = as_tensor(x, context="x")
    adversarial = as_tensor(x_adv, context="x_adv")
    if original.shape != adversarial.shape:
        raise ShapeMismatchError(original.shape, adversarial.shape, "noisy counterpart")
    l2_norm, l0_count = perturbation_norms(original, adversarial)
    if not attack_kind.uses_pixel_flips:
        return np.clip(original + gaussian_perturbation(original.shape, l2_norm, seed), 0.0, 1.0)
    noisy = original.copy()
    if l0_count == 0:
        return noisy
    rng = generator(seed, "flip")
    positions = rng.choice(original.size, size=l0_count, replace=False)
    values = rng.integers(0, 2, size=l0_count).astype(np.float64)
    noisy.flat[positions] = np.where(values == original.flat[positions], 1.0 - values, values)
    return noisy


def run_attack(
    model: NetworkModel,
    x: Any,
    label: int,
    kind: AttackKind,
    seed: int,
    sample_id: int | None = None,
) -> AttackResult:
    """Dispatch one configured attack on one correctly classified sample.

    Targeted attacks aim at ``(label + 1) mod num_classes``.

    Raises:
        NotCorrectlyClassifiedError: If the model misclassifies x
    """
    y = np.eye(model.num_classes)[label]
    params = kind.params
    match kind.name:
        case AttackName.FGSM:
            assert isinstance(params, FgsmParams)
            result = fgsm(model, x, y, params.epsilon, seed=seed)
        case AttackName.BIM_A | AttackName.BIM_B:
            result = bim(model, x, y, kind, seed=seed)
        case AttackName.JSMA:
            assert isinstance(params, JsmaParams)
            target = (label + 1) % model.num_classes
            result = jsma(
                model, x, target, params.theta, params.max_fraction, true_label=label, seed=seed
            )
        case AttackName.CW:
            assert isinstance(params, CwL0Params)
            target = (label + 1) % model.num_classes
            result = cw_l0(model, x, target, params, true_label=label, seed=seed)
        case _:
            raise InvalidSpecError(f"unknown attack {kind.name}")
    return replace(result, sample_id=sample_id)


def perturbation_stats(results: Sequence[AttackResult]) -> tuple[float, float]:
    """(mean L2 norm, fraction still classified as the true label).

    Raises:
        EmptyInputError: If results is empty
    """
    if not results:
        raise EmptyInputError("perturbation_stats needs at least one result")
    mean_l2 = float(np.mean([r.l2_norm for r in results]))
    accuracy = float(np.mean([r.adv_label == r.true_label for r in results]))
    return mean_l2, accuracy


def summarize_attack(
    model: NetworkModel, kind: AttackName, results: Sequence[AttackResult]
) -> AttackStats:
    """Summary row including accuracy on the matched noisy samples.

    Raises:
        EmptyInputError: If results is empty
    """
    mean_l2, adv_accuracy = perturbation_stats(results)
    noisy = np.stack([r.x_noisy for r in results])
    labels = np.array([r.true_label for r in results])
    return AttackStats(
        kind=kind,
        count=len(results),
        mean_l2=mean_l2,
        adv_accuracy=adv_accuracy,
        mean_l0=float(np.mean([r.l0_count for r in results])),
        success_rate=float(np.mean([r.success for r in results])),
        noisy_accuracy=network_service.evaluate_accuracy(model, noisy, labels),
    )
