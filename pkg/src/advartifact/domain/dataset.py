"""Dataset value object."""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from advartifact.domain.exceptions import ValidationError
from advartifact.domain.tensor import Tensor


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images in [0, 1] with integer labels.

    Attributes:
        images: Array [n, channels, height, width]
        labels: Array [n] of class indices
        num_classes: Number of classes labels are drawn from
        split: Free-form split name ("train", "test", ...)
        source: Path or description the data was loaded from
    """

    images: Tensor
    labels: npt.NDArray[np.int64]
    num_classes: int
    split: str = "train"
    source: str = ""

    def __post_init__(self) -> None:
        if self.images.ndim != 4:
            raise ValidationError(f"images must be [n, c, h, w], got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValidationError("labels must have one entry per image")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValidationError("pixel values must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValidationError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        c, h, w = self.images.shape[1:]
        return (int(c), int(h), int(w))

    def onehot(self) -> Tensor:
        return np.eye(self.num_classes)[self.labels]

    def take(self, indices: npt.ArrayLike, split: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            images=self.images[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            split=self.split if split is None else split,
            source=self.source,
        )
