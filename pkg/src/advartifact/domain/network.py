"""Network domain model.

Layer specifications, trained weights and dropout modes. A NetworkModel
is immutable; training produces a new instance.
"""

from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np

from advartifact.domain.exceptions import InvalidSpecError, ShapeMismatchError
from advartifact.domain.tensor import Tensor, decode_tensor, encode_tensor

MODEL_FORMAT_VERSION = 1

Shape = tuple[int, ...]


class LayerKind(StrEnum):
    """Supported layer kinds."""

    CONV2D = "conv2d"
    MAXPOOL2D = "maxpool2d"
    DENSE = "dense"
    RELU = "relu"
    SOFTMAX = "softmax"
    DROPOUT = "dropout"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feedforward stack.

    Only the fields relevant to ``kind`` are meaningful. Convolutions use
    valid padding; pooling windows default to non-overlapping strides.

    Attributes:
        kind: Layer kind
        out_channels: Conv filter count
        kernel_size: Conv kernel edge length
        stride: Conv or pool stride
        window: Pool window edge length
        out_dim: Dense output width
        rate: Dropout probability p in [0, 1)
    """

    kind: LayerKind
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    window: int = 0
    out_dim: int = 0
    rate: float = 0.0

    def __post_init__(self) -> None:
        """Validate kind-specific parameters.

        Raises:
            InvalidSpecError: If a parameter is out of range
        """
        if self.kind is LayerKind.CONV2D and (self.out_channels < 1 or self.kernel_size < 1):
            raise InvalidSpecError("conv2d needs out_channels >= 1 and kernel_size >= 1")
        if self.kind is LayerKind.MAXPOOL2D and self.window < 1:
            raise InvalidSpecError("maxpool2d needs window >= 1")
        if self.kind is LayerKind.DENSE and self.out_dim < 1:
            raise InvalidSpecError("dense needs out_dim >= 1")
        if self.kind is LayerKind.DROPOUT and not 0.0 <= self.rate < 1.0:
            raise InvalidSpecError(f"dropout rate must lie in [0, 1), got {self.rate}")
        if self.stride < 1:
            raise InvalidSpecError(f"stride must be >= 1, got {self.stride}")

    @classmethod
    def conv2d(cls, out_channels: int, kernel_size: int, stride: int = 1) -> "LayerSpec":
        return cls(LayerKind.CONV2D, out_channels=out_channels, kernel_size=kernel_size, stride=stride)

    @classmethod
    def maxpool2d(cls, window: int, stride: int | None = None) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL2D, window=window, stride=stride or window)

    @classmethod
    def dense(cls, out_dim: int) -> "LayerSpec":
        return cls(LayerKind.DENSE, out_dim=out_dim)

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(LayerKind.RELU)

    @classmethod
    def softmax(cls) -> "LayerSpec":
        return cls(LayerKind.SOFTMAX)

    @classmethod
    def dropout(cls, rate: float) -> "LayerSpec":
        return cls(LayerKind.DROPOUT, rate=rate)

    @property
    def is_parametric(self) -> bool:
        return self.kind in (LayerKind.CONV2D, LayerKind.DENSE)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to the minimal kind-specific mapping."""
        data: dict[str, Any] = {"kind": self.kind.value}
        match self.kind:
            case LayerKind.CONV2D:
                data.update(
                    out_channels=self.out_channels, kernel_size=self.kernel_size, stride=self.stride
                )
            case LayerKind.MAXPOOL2D:
                data.update(window=self.window, stride=self.stride)
            case LayerKind.DENSE:
                data.update(out_dim=self.out_dim)
            case LayerKind.DROPOUT:
                data.update(rate=self.rate)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LayerSpec":
        """Create LayerSpec from a config or model-file mapping.

        Raises:
            InvalidSpecError: If the kind is unknown or parameters are invalid
        """
        try:
            kind = LayerKind(data["kind"])
        except (KeyError, ValueError) as e:
            raise InvalidSpecError(f"Unknown layer kind: {data.get('kind')!r}") from e
        match kind:
            case LayerKind.CONV2D:
                return cls.conv2d(
                    int(data.get("out_channels", 0)),
                    int(data.get("kernel_size", 0)),
                    int(data.get("stride", 1)),
                )
            case LayerKind.MAXPOOL2D:
                stride = data.get("stride")
                return cls.maxpool2d(int(data.get("window", 0)), int(stride) if stride else None)
            case LayerKind.DENSE:
                return cls.dense(int(data.get("out_dim", 0)))
            case LayerKind.DROPOUT:
                return cls.dropout(float(data.get("rate", 0.0)))
            case _:
                return cls(kind)


def output_shape(spec: LayerSpec, shape: Shape) -> Shape:
    """Shape produced by ``spec`` on an input of ``shape``.

    Raises:
        ShapeMismatchError: If the layer cannot consume ``shape``
    """
    match spec.kind:
        case LayerKind.CONV2D | LayerKind.MAXPOOL2D:
            if len(shape) != 3:
                raise ShapeMismatchError("(channels, height, width)", shape, spec.kind.value)
            channels, height, width = shape
            edge = spec.kernel_size if spec.kind is LayerKind.CONV2D else spec.window
            if height < edge or width < edge:
                raise ShapeMismatchError(f"spatial size >= {edge}", shape, spec.kind.value)
            out_h = (height - edge) // spec.stride + 1
            out_w = (width - edge) // spec.stride + 1
            out_c = spec.out_channels if spec.kind is LayerKind.CONV2D else channels
            return (out_c, out_h, out_w)
        case LayerKind.DENSE:
            return (spec.out_dim,)
        case LayerKind.SOFTMAX:
            if len(shape) != 1:
                raise ShapeMismatchError("flat logits", shape, "softmax")
            return shape
        case _:
            return shape


def infer_shapes(layers: tuple[LayerSpec, ...], input_shape: Shape) -> list[Shape]:
    """Input shape of every layer followed by the final output shape."""
    shapes = [tuple(input_shape)]
    for spec in layers:
        shapes.append(output_shape(spec, shapes[-1]))
    return shapes


def weight_shapes(spec: LayerSpec, in_shape: Shape) -> tuple[Shape, Shape]:
    """(weight, bias) shapes for a parametric layer.

    Dense weights are stored ``(out_dim, in_dim)`` so that ``Z = W x + b``.
    """
    if spec.kind is LayerKind.CONV2D:
        return (spec.out_channels, in_shape[0], spec.kernel_size, spec.kernel_size), (
            spec.out_channels,
        )
    return (spec.out_dim, int(np.prod(in_shape))), (spec.out_dim,)


@dataclass(frozen=True, eq=False)
class LayerWeights:
    """Weight and bias tensors of one parametric layer."""

    weight: Tensor
    bias: Tensor


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Feedforward network: layer stack plus trained weights.

    ``weights`` is aligned with ``layers``; non-parametric layers hold None.
    The last layer is softmax fed by a dense layer whose input is the
    last hidden activation phi(x).

    Attributes:
        layers: Ordered layer specifications
        input_shape: Shape of one input sample
        num_classes: Width of the softmax output
        weights: Per-layer weights (None for non-parametric layers)
    """

    layers: tuple[LayerSpec, ...]
    input_shape: Shape
    num_classes: int
    weights: tuple[LayerWeights | None, ...]
    shapes: tuple[Shape, ...] = field(init=False)

    def __post_init__(self) -> None:
        """Shape-check the stack and its weights.

        Raises:
            InvalidSpecError: If the stack does not end in dense -> softmax
            ShapeMismatchError: If layers or weights do not compose
        """
        if not self.layers or self.layers[-1].kind is not LayerKind.SOFTMAX:
            raise InvalidSpecError("final layer must be softmax")
        if len(self.layers) < 2 or self.layers[-2].kind is not LayerKind.DENSE:
            raise InvalidSpecError("softmax must be fed by a dense layer")
        if any(spec.kind is LayerKind.SOFTMAX for spec in self.layers[:-1]):
            raise InvalidSpecError("softmax may only appear as the final layer")
        shapes = infer_shapes(self.layers, self.input_shape)
        if shapes[-1] != (self.num_classes,):
            raise ShapeMismatchError((self.num_classes,), shapes[-1], "softmax input")
        if len(self.weights) != len(self.layers):
            raise ShapeMismatchError(len(self.layers), len(self.weights), "weight list")
        for index, (spec, params) in enumerate(zip(self.layers, self.weights, strict=True)):
            if not spec.is_parametric:
                if params is not None:
                    raise ShapeMismatchError(None, "weights", f"layer {index} ({spec.kind})")
                continue
            if params is None:
                raise ShapeMismatchError("weights", None, f"layer {index} ({spec.kind})")
            w_shape, b_shape = weight_shapes(spec, shapes[index])
            if params.weight.shape != w_shape or params.bias.shape != b_shape:
                raise ShapeMismatchError(
                    (w_shape, b_shape),
                    (params.weight.shape, params.bias.shape),
                    f"layer {index} ({spec.kind})",
                )
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def logits_index(self) -> int:
        """Index of the final dense layer producing the logits Z(x)."""
        return len(self.layers) - 2

    @property
    def hidden_shape(self) -> Shape:
        """Shape of phi(x), the input to the final dense layer."""
        return self.shapes[self.logits_index]

    @property
    def hidden_dim(self) -> int:
        return int(np.prod(self.hidden_shape))

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def has_stochastic_dropout(self) -> bool:
        return any(s.kind is LayerKind.DROPOUT and s.rate > 0 for s in self.layers)

    def with_weights(self, weights: tuple[LayerWeights | None, ...]) -> "NetworkModel":
        """Copy of this model carrying new weights."""
        return NetworkModel(self.layers, self.input_shape, self.num_classes, weights)

    def to_dict(self) -> dict[str, Any]:
        """Serialize to the model-file document."""
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [spec.to_dict() for spec in self.layers],
            "weights": [
                None
                if params is None
                else {"weight": encode_tensor(params.weight), "bias": encode_tensor(params.bias)}
                for params in self.weights
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NetworkModel":
        """Load model from the model-file document.

        Raises:
            InvalidSpecError: If the format version is unsupported
            ShapeMismatchError: If weights do not fit the layers
        """
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise InvalidSpecError(
                f"Unsupported model format version: {version}. Expected {MODEL_FORMAT_VERSION}"
            )
        weights = tuple(
            None
            if entry is None
            else LayerWeights(decode_tensor(entry["weight"]), decode_tensor(entry["bias"]))
            for entry in data["weights"]
        )
        return cls(
            layers=tuple(LayerSpec.from_dict(d) for d in data["layers"]),
            input_shape=tuple(int(d) for d in data["input_shape"]),
            num_classes=int(data["num_classes"]),
            weights=weights,
        )


@dataclass(frozen=True)
class DropoutMode:
    """How dropout layers behave during a forward pass.

    Deterministic mode scales inputs by the keep probability (1 - p);
    sampled mode draws an i.i.d. Bernoulli(1 - p) mask from ``seed``.
    """

    seed: int | None = None

    @classmethod
    def deterministic(cls) -> "DropoutMode":
        return cls(None)

    @classmethod
    def sampled(cls, seed: int) -> "DropoutMode":
        return cls(seed)

    @property
    def is_sampled(self) -> bool:
        return self.seed is not None


@dataclass(frozen=True)
class TrainConfig:
    """Adadelta training settings.

    Attributes:
        epochs: Passes over the training set
        batch_size: Samples per update
        adadelta_rho: Decay of the running averages
        adadelta_epsilon: Conditioning constant
        rng_seed: Seed for shuffling and dropout masks
        learning_rate: Scale applied to the Adadelta step
    """

    epochs: int = 10
    batch_size: int = 256
    adadelta_rho: float = 0.95
    adadelta_epsilon: float = 1e-6
    rng_seed: int = 0
    learning_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise InvalidSpecError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidSpecError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.adadelta_rho < 1.0:
            raise InvalidSpecError(f"adadelta_rho must lie in (0, 1), got {self.adadelta_rho}")
        if self.adadelta_epsilon <= 0.0:
            raise InvalidSpecError("adadelta_epsilon must be positive")
        if self.learning_rate <= 0.0:
            raise InvalidSpecError("learning_rate must be positive")


@dataclass(frozen=True)
class TrainHistory:
    """Loss trace of one training run."""

    initial_loss: float
    epoch_losses: tuple[float, ...]
    final_loss: float


def lenet_small(num_classes: int = 10, dropout_after_pool: float = 0.0) -> list[LayerSpec]:
    """LeNet-style template: two conv/pool stages, a 128-unit hidden layer, softmax.

    Args:
        num_classes: Output classes
        dropout_after_pool: Optional dropout rate after the last pooling layer
    """
    layers = [
        LayerSpec.conv2d(8, 5),
        LayerSpec.relu(),
        LayerSpec.maxpool2d(2),
        LayerSpec.conv2d(16, 5),
        LayerSpec.relu(),
        LayerSpec.maxpool2d(2),
    ]
    if dropout_after_pool > 0:
        layers.append(LayerSpec.dropout(dropout_after_pool))
    layers += [
        LayerSpec.dense(128),
        LayerSpec.relu(),
        LayerSpec.dropout(0.5),
        LayerSpec.dense(num_classes),
        LayerSpec.softmax(),
    ]
    return layers
