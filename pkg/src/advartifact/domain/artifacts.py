"""Artifact feature models.

Per-class banks of last-hidden-layer features, the two detection
features of a sample, density walks and direction fractions.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from advartifact.domain.exceptions import (
    EmptyClassError,
    InvalidGridError,
    ShapeMismatchError,
    UnfittedBankError,
    UnknownClassError,
)
from advartifact.domain.tensor import Tensor, decode_tensor, encode_tensor


@dataclass(frozen=True, eq=False)
class ClassFeatureBank:
    """Training features phi(x_i) grouped by class, plus the kernel bandwidth.

    Attributes:
        features: One [n_t, hidden_dim] matrix per class index t
        bandwidth: Gaussian kernel bandwidth sigma, None until fitted
    """

    features: tuple[Tensor, ...]
    bandwidth: float | None = None

    def __post_init__(self) -> None:
        if not self.features:
            raise EmptyClassError(0)
        dim = self.features[0].shape[1] if self.features[0].ndim == 2 else -1
        for index, matrix in enumerate(self.features):
            if matrix.ndim != 2 or matrix.shape[1] != dim:
                raise ShapeMismatchError(("n", dim), matrix.shape, f"feature bank class {index}")
            if matrix.shape[0] == 0:
                raise EmptyClassError(index)
        if self.bandwidth is not None and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidGridError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def num_classes(self) -> int:
        return len(self.features)

    @property
    def hidden_dim(self) -> int:
        return int(self.features[0].shape[1])

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(m.shape[0]) for m in self.features)

    @property
    def sigma(self) -> float:
        """Fitted bandwidth.

        Raises:
            UnfittedBankError: If no bandwidth has been set
        """
        if self.bandwidth is None:
            raise UnfittedBankError("feature bank has no bandwidth; run fit_bandwidth first")
        return self.bandwidth

    def class_features(self, class_index: int) -> Tensor:
        if not 0 <= class_index < self.num_classes:
            raise UnknownClassError(class_index)
        return self.features[class_index]

    def with_bandwidth(self, bandwidth: float) -> "ClassFeatureBank":
        return ClassFeatureBank(self.features, float(bandwidth))

    def to_dict(self) -> dict[str, Any]:
        return {
            "bandwidth": self.bandwidth,
            "classes": [encode_tensor(m) for m in self.features],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ClassFeatureBank":
        bandwidth = data.get("bandwidth")
        return cls(
            features=tuple(decode_tensor(m) for m in data["classes"]),
            bandwidth=None if bandwidth is None else float(bandwidth),
        )


@dataclass(frozen=True)
class ArtifactFeatures:
    """The two detection features of one sample.

    Attributes:
        uncertainty: Mean MC-dropout variance U (>= 0)
        neg_log_density: -log K of phi(x) under the predicted class
        predicted_class: Deterministic prediction
    """

    uncertainty: float
    neg_log_density: float
    predicted_class: int

    @property
    def vector(self) -> tuple[float, float]:
        return (self.uncertainty, self.neg_log_density)


@dataclass(frozen=True)
class DensityWalkRecord:
    """Log-densities of one BIM iterate under the source and final classes."""

    iteration: int
    log_density_source: float
    log_density_adv: float


@dataclass(frozen=True)
class DensityWalk:
    """Density trace of a sample moved by iterated signed-gradient steps.

    Attributes:
        source_class: Prediction on the unperturbed sample
        final_class: Prediction after the last iterate
        crossover: First iteration whose prediction differs from the source, if any
        records: One record per iterate, iteration 0 being the original sample
    """

    source_class: int
    final_class: int
    crossover: int | None
    records: tuple[DensityWalkRecord, ...]

    @property
    def source_density_dropped(self) -> bool:
        return self.records[-1].log_density_source < self.records[0].log_density_source


@dataclass(frozen=True)
class FeatureDirections:
    """Fractions of adversarial samples whose features moved the expected way.

    u is uncertainty and d is density (K, not -log K).
    """

    count: int
    uncertainty_up_vs_normal: float
    density_down_vs_normal: float
    uncertainty_up_vs_noisy: float
    density_down_vs_noisy: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "u_adv_gt_u_normal": self.uncertainty_up_vs_normal,
            "d_adv_lt_d_normal": self.density_down_vs_normal,
            "u_adv_gt_u_noisy": self.uncertainty_up_vs_noisy,
            "d_adv_lt_d_noisy": self.density_down_vs_noisy,
        }
