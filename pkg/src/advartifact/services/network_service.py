"""Network service functions.

Forward and backward passes, Adadelta training and the input
derivatives the attacks need. All functions treat NetworkModel as
immutable; ``train`` returns a new model.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp
from tqdm import tqdm

from advartifact.domain.exceptions import (
    InvalidSpecError,
    NonFiniteLossError,
    ShapeMismatchError,
)
from advartifact.domain.network import (
    DropoutMode,
    LayerKind,
    LayerSpec,
    LayerWeights,
    NetworkModel,
    TrainConfig,
    TrainHistory,
    infer_shapes,
    weight_shapes,
)
from advartifact.domain.seeding import derive_seed, generator
from advartifact.domain.tensor import Tensor, as_tensor, require_shape

logger = logging.getLogger(__name__)

Modes = DropoutMode | Sequence[DropoutMode]


@dataclass
class _Cache:
    """Per-layer values kept for the backward pass."""

    in_shape: tuple[int, ...]
    data: Any = None


def build_model(
    specs: Sequence[LayerSpec],
    input_shape: Sequence[int],
    num_classes: int,
    rng_seed: int,
) -> NetworkModel:
    """Build a shape-checked model with Glorot-uniform weights and zero biases.

    Args:
        specs: Layer stack ending in dense -> softmax
        input_shape: Shape of one sample, e.g. (1, 28, 28)
        num_classes: Softmax width
        rng_seed: Seed for weight initialization

    Returns:
        Freshly initialized NetworkModel

    Raises:
        InvalidSpecError: If the stack does not end in softmax
        ShapeMismatchError: If layers do not compose over input_shape
    """
    layers = tuple(specs)
    if not layers or layers[-1].kind is not LayerKind.SOFTMAX:
        raise InvalidSpecError("final layer must be softmax")
    shapes = infer_shapes(layers, tuple(input_shape))
    weights: list[LayerWeights | None] = []
    for index, spec in enumerate(layers):
        if not spec.is_parametric:
            weights.append(None)
            continue
        w_shape, b_shape = weight_shapes(spec, shapes[index])
        if spec.kind is LayerKind.CONV2D:
            receptive = spec.kernel_size * spec.kernel_size
            fan_in, fan_out = w_shape[1] * receptive, w_shape[0] * receptive
        else:
            fan_out, fan_in = w_shape
        bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
        rng = generator(rng_seed, "init", index)
        weights.append(LayerWeights(rng.uniform(-bound, bound, size=w_shape), np.zeros(b_shape)))
    return NetworkModel(layers, tuple(input_shape), num_classes, tuple(weights))


# --- layer kernels -----------------------------------------------------------


def _windows(x: Tensor, edge: int, stride: int) -> Tensor:
    return sliding_window_view(x, (edge, edge), axis=(2, 3))[:, :, ::stride, ::stride]


def _conv_forward(x: Tensor, params: LayerWeights, spec: LayerSpec) -> tuple[Tensor, Any]:
    windows = _windows(x, spec.kernel_size, spec.stride)
    out = np.einsum("nchwij,fcij->nfhw", windows, params.weight, optimize=True)
    return out + params.bias[None, :, None, None], windows


def _conv_backward(
    grad: Tensor, cache: _Cache, params: LayerWeights, spec: LayerSpec, with_params: bool
) -> tuple[Tensor, LayerWeights | None]:
    k, s = spec.kernel_size, spec.stride
    out_h, out_w = grad.shape[2], grad.shape[3]
    dx = np.zeros((grad.shape[0],) + cache.in_shape[1:])
    for i in range(k):
        for j in range(k):
            dx[:, :, i : i + s * out_h : s, j : j + s * out_w : s] += np.einsum(
                "nfhw,fc->nchw", grad, params.weight[:, :, i, j], optimize=True
            )
    if not with_params:
        return dx, None
    d_weight = np.einsum("nfhw,nchwij->fcij", grad, cache.data, optimize=True)
    return dx, LayerWeights(d_weight, grad.sum(axis=(0, 2, 3)))


def _pool_forward(x: Tensor, spec: LayerSpec) -> tuple[Tensor, Any]:
    w = spec.window
    windows = _windows(x, w, spec.stride)
    flat = windows.reshape(windows.shape[:4] + (w * w,))
    arg = flat.argmax(axis=-1)
    return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(grad: Tensor, cache: _Cache, spec: LayerSpec) -> Tensor:
    w, s = spec.window, spec.stride
    out_h, out_w = grad.shape[2], grad.shape[3]
    dx = np.zeros((grad.shape[0],) + cache.in_shape[1:])
    for index in range(w * w):
        i, j = divmod(index, w)
        dx[:, :, i : i + s * out_h : s, j : j + s * out_w : s] += grad * (cache.data == index)
    return dx


def _dropout_factor(a: Tensor, spec: LayerSpec, index: int, modes: Modes) -> Tensor | float:
    keep = 1.0 - spec.rate
    if isinstance(modes, DropoutMode):
        if not modes.is_sampled:
            return keep
        rng = generator(int(modes.seed), "dropout", index)  # type: ignore[arg-type]
        return (rng.random(a.shape) < keep).astype(np.float64)
    rows = []
    for mode in modes:
        if mode.is_sampled:
            rng = generator(int(mode.seed), "dropout", index)  # type: ignore[arg-type]
            rows.append((rng.random((1,) + a.shape[1:]) < keep).astype(np.float64))
        else:
            rows.append(np.full((1,) + a.shape[1:], keep))
    return np.concatenate(rows, axis=0)


def _forward(model: NetworkModel, xb: Tensor, modes: Modes) -> tuple[Tensor, list[_Cache]]:
    """Run every layer up to the logits; returns (logits, caches)."""
    if not isinstance(modes, DropoutMode) and len(modes) != xb.shape[0]:
        raise ShapeMismatchError(xb.shape[0], len(modes), "per-row dropout modes")
    a = xb
    caches: list[_Cache] = []
    for index, spec in enumerate(model.layers[:-1]):
        cache = _Cache(a.shape)
        params = model.weights[index]
        match spec.kind:
            case LayerKind.CONV2D:
                a, cache.data = _conv_forward(a, params, spec)  # type: ignore[arg-type]
            case LayerKind.MAXPOOL2D:
                a, cache.data = _pool_forward(a, spec)
            case LayerKind.DENSE:
                flat = a.reshape(a.shape[0], -1)
                cache.data = flat
                a = flat @ params.weight.T + params.bias  # type: ignore[union-attr]
            case LayerKind.RELU:
                cache.data = a > 0
                a = np.where(cache.data, a, 0.0)
            case LayerKind.DROPOUT:
                cache.data = _dropout_factor(a, spec, index, modes)
                a = a * cache.data
        caches.append(cache)
    return a, caches


def _backward(
    model: NetworkModel, caches: list[_Cache], grad_logits: Tensor, with_params: bool
) -> tuple[Tensor, list[LayerWeights | None]]:
    """Back-propagate a logits gradient to the input (and optionally weights).

    ``grad_logits`` may carry more rows than the forward batch when the
    forward batch has a single row; the rows then act as independent
    seeds (used for Jacobians).
    """
    grad = grad_logits
    param_grads: list[LayerWeights | None] = [None] * len(model.layers)
    for index in range(model.logits_index, -1, -1):
        spec, cache, params = model.layers[index], caches[index], model.weights[index]
        match spec.kind:
            case LayerKind.CONV2D:
                grad, param_grads[index] = _conv_backward(
                    grad, cache, params, spec, with_params  # type: ignore[arg-type]
                )
            case LayerKind.MAXPOOL2D:
                grad = _pool_backward(grad, cache, spec)
            case LayerKind.DENSE:
                if with_params:
                    param_grads[index] = LayerWeights(grad.T @ cache.data, grad.sum(axis=0))
                grad = (grad @ params.weight).reshape(  # type: ignore[union-attr]
                    (grad.shape[0],) + cache.in_shape[1:]
                )
            case LayerKind.RELU | LayerKind.DROPOUT:
                grad = grad * cache.data
    return grad, param_grads


def _softmax(logits: Tensor) -> Tensor:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def _as_batch(model: NetworkModel, xs: Any, context: str) -> Tensor:
    xb = as_tensor(xs, context=context)
    if xb.shape[1:] != model.input_shape:
        raise ShapeMismatchError(("n",) + model.input_shape, xb.shape, context)
    return xb


def _as_sample(model: NetworkModel, x: Any, context: str = "input") -> Tensor:
    sample = as_tensor(x, context=context)
    require_shape(sample, model.input_shape, context)
    return sample


# --- public operations -------------------------------------------------------


def forward_batch(model: NetworkModel, xs: Any, mode: Modes) -> tuple[Tensor, Tensor]:
    """Forward a batch; returns (probs [n, C], hidden [n, H])."""
    xb = _as_batch(model, xs, "batch")
    logits, caches = _forward(model, xb, mode)
    hidden = caches[model.logits_index].data
    return _softmax(logits), hidden


def forward(model: NetworkModel, x: Any, mode: DropoutMode) -> tuple[Tensor, Tensor]:
    """Forward one sample.

    Args:
        model: Network
        x: Sample matching ``model.input_shape``
        mode: Dropout behaviour

    Returns:
        (probs, hidden) where hidden is phi(x), the input to the final dense layer

    Raises:
        ShapeMismatchError: If x does not match the input shape
    """
    sample = _as_sample(model, x)
    probs, hidden = forward_batch(model, sample[None], mode)
    return probs[0], hidden[0]


def predict(model: NetworkModel, x: Any) -> int:
    """Argmax of the deterministic forward pass; ties go to the lowest index."""
    probs, _ = forward(model, x, DropoutMode.deterministic())
    return int(np.argmax(probs))


def predict_batch(model: NetworkModel, xs: Any, batch_size: int = 256) -> np.ndarray:
    """Deterministic class predictions for a batch."""
    probs = _batched_probs(model, _as_batch(model, xs, "batch"), batch_size)
    return probs.argmax(axis=1)


def hidden_features(model: NetworkModel, xs: Any, batch_size: int = 256) -> Tensor:
    """phi(x) rows for every sample, deterministic mode."""
    xb = _as_batch(model, xs, "batch")
    chunks = [
        forward_batch(model, xb[start : start + batch_size], DropoutMode.deterministic())[1]
        for start in range(0, len(xb), batch_size)
    ]
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, model.hidden_dim))


def evaluate_accuracy(model: NetworkModel, xs: Any, labels: Any, batch_size: int = 256) -> float:
    """Fraction of samples whose deterministic prediction equals the label."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict_batch(model, xs, batch_size) == labels))


def _batched_probs(model: NetworkModel, xb: Tensor, batch_size: int) -> Tensor:
    chunks = [
        forward_batch(model, xb[start : start + batch_size], DropoutMode.deterministic())[0]
        for start in range(0, len(xb), batch_size)
    ]
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, model.num_classes))


def cross_entropy(model: NetworkModel, xs: Any, ys: Any, batch_size: int = 256) -> float:
    """Mean cross-entropy of the deterministic network over a labelled set."""
    xb = _as_batch(model, xs, "batch")
    yb = _as_onehot(model, ys, len(xb))
    total = 0.0
    for start in range(0, len(xb), batch_size):
        logits, _ = _forward(model, xb[start : start + batch_size], DropoutMode.deterministic())
        total += float(_batch_loss(logits, yb[start : start + batch_size]) * len(logits))
    return total / max(len(xb), 1)


def _batch_loss(logits: Tensor, yb: Tensor) -> float:
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    return float(-np.mean(np.sum(yb * log_probs, axis=1)))


def _as_onehot(model: NetworkModel, ys: Any, n: int) -> Tensor:
    yb = as_tensor(ys, context="labels")
    require_shape(yb, (n, model.num_classes), "one-hot labels")
    return yb


def train(model: NetworkModel, train_x: Any, train_y: Any, config: TrainConfig) -> NetworkModel:
    """Train with Adadelta on cross-entropy; returns the updated model."""
    trained, _ = train_with_history(model, train_x, train_y, config)
    return trained


def train_with_history(
    model: NetworkModel,
    train_x: Any,
    train_y: Any,
    config: TrainConfig,
    *,
    progress: bool = False,
) -> tuple[NetworkModel, TrainHistory]:
    """Train with Adadelta and report the loss trace.

    Each batch runs with a freshly sampled dropout mask. Shuffling and
    masks derive from ``config.rng_seed`` only.

    Args:
        model: Starting model
        train_x: Inputs [n, *input_shape] with pixels in [0, 1]
        train_y: One-hot labels [n, num_classes]
        config: Training settings
        progress: Show a tqdm bar over epochs

    Returns:
        (trained model, history)

    Raises:
        ShapeMismatchError: If inputs or labels have the wrong shape
        NonFiniteLossError: If a batch loss diverges
    """
    xb = _as_batch(model, train_x, "training inputs")
    yb = _as_onehot(model, train_y, len(xb))
    initial_loss = cross_entropy(model, xb, yb)
    logger.info("Training on %d samples, initial loss %.4f", len(xb), initial_loss)

    current = model
    params = [w for w in model.weights if w is not None]
    mean_sq_grad = [LayerWeights(np.zeros_like(p.weight), np.zeros_like(p.bias)) for p in params]
    mean_sq_step = [LayerWeights(np.zeros_like(p.weight), np.zeros_like(p.bias)) for p in params]
    rho, eps = config.adadelta_rho, config.adadelta_epsilon

    def adadelta(value: Tensor, grad: Tensor, acc_grad: Tensor, acc_step: Tensor) -> Tensor:
        acc_grad *= rho
        acc_grad += (1.0 - rho) * grad * grad
        step = np.sqrt(acc_step + eps) / np.sqrt(acc_grad + eps) * grad
        acc_step *= rho
        acc_step += (1.0 - rho) * step * step
        return value - config.learning_rate * step

    epoch_losses: list[float] = []
    epochs = tqdm(range(config.epochs), desc="train", disable=not progress, leave=False)
    for epoch in epochs:
        order = generator(config.rng_seed, "shuffle", epoch).permutation(len(xb))
        batch_losses = []
        for batch, start in enumerate(range(0, len(xb), config.batch_size)):
            idx = order[start : start + config.batch_size]
            mode = DropoutMode.sampled(derive_seed(config.rng_seed, "batch", epoch, batch))
            logits, caches = _forward(current, xb[idx], mode)
            loss = _batch_loss(logits, yb[idx])
            if not np.isfinite(loss):
                raise NonFiniteLossError(epoch, batch, loss)
            batch_losses.append(loss)
            grad_logits = (_softmax(logits) - yb[idx]) / len(idx)
            _, grads = _backward(current, caches, grad_logits, with_params=True)

            updated: list[LayerWeights | None] = []
            slot = 0
            for weights, grad in zip(current.weights, grads, strict=True):
                if weights is None:
                    updated.append(None)
                    continue
                assert grad is not None
                updated.append(
                    LayerWeights(
                        adadelta(weights.weight, grad.weight, mean_sq_grad[slot].weight, mean_sq_step[slot].weight),
                        adadelta(weights.bias, grad.bias, mean_sq_grad[slot].bias, mean_sq_step[slot].bias),
                    )
                )
                slot += 1
            current = current.with_weights(tuple(updated))
        epoch_losses.append(float(np.mean(batch_losses)))
        logger.info("Epoch %d/%d: mean batch loss %.4f", epoch + 1, config.epochs, epoch_losses[-1])

    final_loss = cross_entropy(current, xb, yb)
    logger.info("Training finished, final loss %.4f", final_loss)
    return current, TrainHistory(initial_loss, tuple(epoch_losses), final_loss)


def input_gradient(model: NetworkModel, x: Any, y_onehot: Any) -> Tensor:
    """Gradient of the cross-entropy loss w.r.t. the input, deterministic mode.

    Raises:
        ShapeMismatchError: If x or y_onehot has the wrong shape
    """
    sample = _as_sample(model, x)
    y = _as_onehot(model, np.asarray(y_onehot)[None], 1)
    logits, caches = _forward(model, sample[None], DropoutMode.deterministic())
    grad, _ = _backward(model, caches, _softmax(logits) - y, with_params=False)
    return grad[0]


def logit_gradient(
    model: NetworkModel,
    x: Any,
    coefficients: Any | Callable[[Tensor], Any],
) -> tuple[Tensor, Tensor]:
    """Logits Z(x) and the gradient of sum_j c_j Z_j(x) w.r.t. x.

    ``coefficients`` may be a callable mapping the logits to c, so the
    weighting can depend on Z(x) while still needing one forward pass.

    Raises:
        ShapeMismatchError: If x or coefficients have the wrong shape
    """
    sample = _as_sample(model, x)
    logits, caches = _forward(model, sample[None], DropoutMode.deterministic())
    raw = coefficients(logits[0]) if callable(coefficients) else coefficients
    coeffs = as_tensor(raw, context="coefficients")
    require_shape(coeffs, (model.num_classes,), "logit coefficients")
    grad, _ = _backward(model, caches, coeffs[None], with_params=False)
    return logits[0], grad[0]


def class_jacobians(model: NetworkModel, x: Any) -> tuple[Tensor, Tensor]:
    """Jacobians of softmax outputs and logits w.r.t. the flattened input.

    Returns:
        (dF, dZ), each [num_classes, input_dim]; row j is the gradient of F_j
        (resp. Z_j)
    """
    sample = _as_sample(model, x)
    logits, caches = _forward(model, sample[None], DropoutMode.deterministic())
    identity = np.eye(model.num_classes)
    grad, _ = _backward(model, caches, identity, with_params=False)
    d_logits = grad.reshape(model.num_classes, -1)
    probs = _softmax(logits[0])
    softmax_jacobian = np.diag(probs) - np.outer(probs, probs)
    return softmax_jacobian @ d_logits, d_logits


def sample_predictions(model: NetworkModel, x: Any, T: int, seed: int) -> Tensor:
    """T stochastic softmax vectors under independently sampled dropout masks.

    Sample t uses the mask stream ``derive_seed(seed, t)``.

    Returns:
        Array [T, num_classes]

    Raises:
        InvalidSpecError: If T < 1
    """
    if T < 1:
        raise InvalidSpecError(f"T must be >= 1, got {T}")
    sample = _as_sample(model, x)
    if not model.has_stochastic_dropout:
        probs, _ = forward(model, sample, DropoutMode.deterministic())
        return np.tile(probs, (T, 1))
    modes = [DropoutMode.sampled(derive_seed(seed, t)) for t in range(T)]
    batch = np.broadcast_to(sample, (T,) + sample.shape)
    probs, _ = forward_batch(model, batch, modes)
    return probs
