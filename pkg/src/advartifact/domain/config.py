"""Experiment configuration models.

One frozen tree per experiment document. Parsing and validation live in
``config_service``; these classes only hold values and defaults.
"""

from dataclasses import dataclass, field, replace
from typing import Any

from advartifact.domain.attack import AttackKind, AttackName
from advartifact.domain.detector import LogRegConfig
from advartifact.domain.exceptions import InvalidSpecError
from advartifact.domain.network import LayerSpec, TrainConfig, lenet_small


@dataclass(frozen=True)
class DataSource:
    """Location of one split.

    For IDX data ``images``/``labels`` are the two IDX files; for CSV data
    ``images`` is the CSV file and ``labels`` is None.
    """

    images: str
    labels: str | None = None


@dataclass(frozen=True)
class DatasetConfig:
    """Dataset location and desk-scale sizes.

    Attributes:
        format: "idx" or "csv"
        train: Training split
        test: Test split
        num_classes: Number of classes
        image_shape: (channels, height, width); CSV data may omit it for square images
        train_size: Stratified subset size of the training split (None = all)
        test_size: Subset size of the test split (None = all)
        validation_size: Training samples held out for the undecided cutoff
        name: Dataset name used in reports
    """

    format: str
    train: DataSource
    test: DataSource
    num_classes: int = 10
    image_shape: tuple[int, int, int] | None = None
    train_size: int | None = None
    test_size: int | None = None
    validation_size: int = 0
    name: str = "mnist"


def _default_layers() -> tuple[LayerSpec, ...]:
    return tuple(lenet_small(10, dropout_after_pool=0.5))


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple[LayerSpec, ...] = field(default_factory=_default_layers)
    training: TrainConfig = field(default_factory=TrainConfig)


def _default_attacks() -> tuple[AttackKind, ...]:
    return (
        AttackKind.fgsm(),
        AttackKind.bim_a(),
        AttackKind.bim_b(),
        AttackKind.jsma(),
        AttackKind.cw_l0(),
    )


@dataclass(frozen=True)
class AttackConfig:
    """Attacks to run, in report order.

    Attributes:
        kinds: One entry per attack
        max_samples: Cap on correctly classified test samples attacked
    """

    kinds: tuple[AttackKind, ...] = field(default_factory=_default_attacks)
    max_samples: int = 200

    @property
    def names(self) -> tuple[AttackName, ...]:
        return tuple(k.name for k in self.kinds)

    def only(self, names: set[AttackName]) -> "AttackConfig":
        return replace(self, kinds=tuple(k for k in self.kinds if k.name in names))


@dataclass(frozen=True)
class ArtifactConfig:
    """Feature extraction settings.

    Attributes:
        mc_samples: T, stochastic forward passes per uncertainty estimate
        grid_size: Bandwidth candidates on the default grid
        bank_cap: Maximum training features kept per class (None = all)
        walks: Number of density walks to record
    """

    mc_samples: int = 50
    grid_size: int = 20
    bank_cap: int | None = None
    walks: int = 20

    def __post_init__(self) -> None:
        if not isinstance(self.mc_samples, int) or self.mc_samples < 2:
            raise InvalidSpecError(f"mc_samples must be an integer >= 2, got {self.mc_samples!r}")
        if not isinstance(self.grid_size, int) or self.grid_size < 1:
            raise InvalidSpecError(f"grid_size must be an integer >= 1, got {self.grid_size!r}")
        if self.bank_cap is not None and (not isinstance(self.bank_cap, int) or self.bank_cap < 2):
            raise InvalidSpecError(f"bank_cap must be null or an integer >= 2, got {self.bank_cap!r}")
        if not isinstance(self.walks, int) or self.walks < 0:
            raise InvalidSpecError(f"walks must be an integer >= 0, got {self.walks!r}")


@dataclass(frozen=True)
class DetectorConfig:
    """Detector split and logistic-regression settings."""

    train_fraction: float = 0.5
    logreg: LogRegConfig = field(default_factory=LogRegConfig)


@dataclass(frozen=True)
class UndecidedConfig:
    """Uncertainty-cutoff settings.

    Attributes:
        percentile: P, the percentile of adversarial uncertainties used as cutoff
        epsilon: FGSM magnitude for the validation adversarial samples
    """

    percentile: float = 50.0
    epsilon: float = 0.25

    def __post_init__(self) -> None:
        if not isinstance(self.percentile, int | float) or not 0.0 <= self.percentile <= 100.0:
            raise InvalidSpecError(f"percentile must lie in [0, 100], got {self.percentile!r}")
        if not isinstance(self.epsilon, int | float) or self.epsilon <= 0:
            raise InvalidSpecError(f"epsilon must be positive, got {self.epsilon!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Root of the experiment document.

    Attributes:
        seed: Master seed; every stage seed derives from it
        dataset: Dataset settings
        model: Architecture and training
        attacks: Attacks to run
        artifacts: Feature extraction
        detector: Detector split and training
        undecided: Undecided-class cutoff
    """

    seed: int
    dataset: DatasetConfig
    model: ModelConfig = field(default_factory=ModelConfig)
    attacks: AttackConfig = field(default_factory=AttackConfig)
    artifacts: ArtifactConfig = field(default_factory=ArtifactConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    undecided: UndecidedConfig = field(default_factory=UndecidedConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict[str, Any]:
        """Canonical form used for the config hash."""
        ds = self.dataset
        return {
            "seed": self.seed,
            "dataset": {
                "format": ds.format,
                "train": {"images": ds.train.images, "labels": ds.train.labels},
                "test": {"images": ds.test.images, "labels": ds.test.labels},
                "num_classes": ds.num_classes,
                "image_shape": list(ds.image_shape) if ds.image_shape else None,
                "train_size": ds.train_size,
                "test_size": ds.test_size,
                "validation_size": ds.validation_size,
                "name": ds.name,
            },
            "model": {
                "layers": [spec.to_dict() for spec in self.model.layers],
                "training": vars(self.model.training),
            },
            "attacks": {
                "max_samples": self.attacks.max_samples,
                "kinds": [kind.to_dict() for kind in self.attacks.kinds],
            },
            "artifacts": vars(self.artifacts),
            "detector": {
                "train_fraction": self.detector.train_fraction,
                "logreg": vars(self.detector.logreg),
            },
            "undecided": vars(self.undecided),
        }
