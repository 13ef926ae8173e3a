"""Tensor value helpers.

Tensors are plain ``numpy`` float64 arrays. This module holds the
validation and wire-encoding helpers shared by every layer.
"""

import base64
from typing import Any

import numpy as np
import numpy.typing as npt

from advartifact.domain.exceptions import ShapeMismatchError, ValidationError

Tensor = npt.NDArray[np.float64]


def as_tensor(values: Any, *, context: str = "tensor") -> Tensor:
    """Convert input to a finite float64 array.

    Raises:
        ValidationError: If any element is NaN or infinite
    """
    array = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{context} contains non-finite values")
    return array


def require_shape(x: Tensor, shape: tuple[int, ...], context: str) -> None:
    """Raise ShapeMismatchError unless ``x.shape == shape``."""
    if tuple(x.shape) != tuple(shape):
        raise ShapeMismatchError(tuple(shape), tuple(x.shape), context)


def require_unit_box(x: Tensor, context: str = "input") -> None:
    """Raise ValidationError unless every element lies in [0, 1]."""
    if x.size and (float(x.min()) < 0.0 or float(x.max()) > 1.0):
        raise ValidationError(f"{context} must lie in [0, 1]")


def encode_tensor(x: Tensor) -> dict[str, Any]:
    """Encode tensor as ``{shape, data}`` with base64 little-endian float64 payload."""
    payload = np.ascontiguousarray(x, dtype="<f8").tobytes()
    return {
        "shape": [int(d) for d in x.shape],
        "data": base64.b64encode(payload).decode("ascii"),
    }


def decode_tensor(data: dict[str, Any]) -> Tensor:
    """Decode the ``{shape, data}`` form produced by :func:`encode_tensor`.

    Raises:
        ShapeMismatchError: If the payload length disagrees with the shape
    """
    shape = tuple(int(d) for d in data["shape"])
    raw = base64.b64decode(data["data"])
    flat = np.frombuffer(raw, dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise ShapeMismatchError(expected, flat.size, "tensor payload")
    return flat.astype(np.float64).reshape(shape)
