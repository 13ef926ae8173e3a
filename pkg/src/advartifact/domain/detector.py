"""Detector domain models."""

import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from advartifact.domain.artifacts import ArtifactFeatures
from advartifact.domain.exceptions import InvalidSpecError, ValidationError

UNDECIDED = -1
NO_ATTACK = "none"


class SampleSet(StrEnum):
    """Origin of a feature row."""

    NORMAL = "normal"
    NOISY = "noisy"
    ADVERSARIAL = "adversarial"


class DetectorKind(StrEnum):
    """Scalar score used to rank samples as adversarial."""

    UNCERTAINTY = "uncertainty"
    DENSITY = "density"
    COMBINED = "combined"


@dataclass(frozen=True)
class FeatureRecord:
    """One row of the feature table.

    Attributes:
        sample_id: Index of the underlying test sample
        sample_set: normal, noisy or adversarial
        attack: Attack name, or "none" for normal rows
        features: Detection features
    """

    sample_id: int
    sample_set: SampleSet
    attack: str
    features: ArtifactFeatures

    def to_row(self) -> dict[str, Any]:
        return {
            "sample_id": self.sample_id,
            "set": str(self.sample_set),
            "attack_kind": self.attack,
            "predicted_class": self.features.predicted_class,
            "uncertainty": self.features.uncertainty,
            "neg_log_density": self.features.neg_log_density,
        }

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "FeatureRecord":
        return cls(
            sample_id=int(row["sample_id"]),
            sample_set=SampleSet(row["set"]),
            attack=str(row["attack_kind"]),
            features=ArtifactFeatures(
                uncertainty=float(row["uncertainty"]),
                neg_log_density=float(row["neg_log_density"]),
                predicted_class=int(row["predicted_class"]),
            ),
        )


@dataclass(frozen=True)
class ZScoreParams:
    """Per-feature mean and population standard deviation."""

    mean: tuple[float, float]
    std: tuple[float, float]

    def __post_init__(self) -> None:
        if any(s <= 0 for s in self.std):
            raise ValidationError("z-score std must be positive")


@dataclass(frozen=True)
class LogRegConfig:
    """Full-batch gradient descent settings for the combined detector."""

    iters: int = 2000
    learning_rate: float = 0.1
    l2_penalty: float = 1e-4

    def __post_init__(self) -> None:
        if self.iters < 0:
            raise InvalidSpecError(f"iters must be >= 0, got {self.iters}")
        if self.learning_rate <= 0:
            raise InvalidSpecError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise InvalidSpecError("l2_penalty must be >= 0")


@dataclass(frozen=True)
class DetectorModel:
    """Logistic regression over z-scored (uncertainty, -log density).

    Attributes:
        zscore: Normalization fitted on the training features
        weights: One weight per feature
        bias: Intercept
        final_loss: Training loss at the returned parameters
        initial_loss: Training loss at zero initialization
    """

    zscore: ZScoreParams
    weights: tuple[float, float] = (0.0, 0.0)
    bias: float = 0.0
    initial_loss: float = math.log(2.0)
    final_loss: float = math.log(2.0)

    def __post_init__(self) -> None:
        values = (*self.weights, self.bias, *self.zscore.mean, *self.zscore.std)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("detector parameters must be finite")

    def to_dict(self) -> dict[str, Any]:
        return {
            "zscore": {"mean": list(self.zscore.mean), "std": list(self.zscore.std)},
            "weights": list(self.weights),
            "bias": self.bias,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DetectorModel":
        zs = data["zscore"]
        return cls(
            zscore=ZScoreParams(
                mean=(float(zs["mean"][0]), float(zs["mean"][1])),
                std=(float(zs["std"][0]), float(zs["std"][1])),
            ),
            weights=(float(data["weights"][0]), float(data["weights"][1])),
            bias=float(data["bias"]),
            initial_loss=float(data["initial_loss"]),
            final_loss=float(data["final_loss"]),
        )


@dataclass(frozen=True)
class RocCurve:
    """ROC vertices from (0, 0) to (1, 1) with the trapezoidal AUC.

    ``thresholds[k]`` is the score at which vertex k is reached; the
    first vertex uses +inf.
    """

    thresholds: tuple[float, ...]
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr, self.tpr, strict=True))


@dataclass(frozen=True)
class DetectorEvaluation:
    """Per-attack and overall ROC curves for one detector kind."""

    kind: DetectorKind
    per_attack: dict[str, RocCurve] = field(default_factory=dict)
    overall: RocCurve | None = None

    def auc_by_attack(self) -> dict[str, float]:
        return {name: curve.auc for name, curve in self.per_attack.items()}
