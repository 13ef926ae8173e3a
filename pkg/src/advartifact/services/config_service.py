"""Configuration parsing service.

Service functions for parsing experiment documents (YAML or JSON) into
an ExperimentConfig.
"""

from dataclasses import fields
from pathlib import PurePosixPath
from typing import Any

import yaml

from advartifact.domain.attack import AttackKind, AttackName
from advartifact.domain.config import (
    ArtifactConfig,
    AttackConfig,
    DataSource,
    DatasetConfig,
    DetectorConfig,
    ExperimentConfig,
    ModelConfig,
    UndecidedConfig,
)
from advartifact.domain.detector import LogRegConfig
from advartifact.domain.exceptions import (
    ConfigFileNotFoundError,
    ConfigParseError,
    ConfigValidationError,
    DomainError,
)
from advartifact.domain.network import LayerSpec, TrainConfig, lenet_small
from advartifact.protocols.filesystem import FileSystem

DATASET_FORMATS = ("idx", "csv")


class _Reader:
    """Typed field access that reports dotted field names on failure."""

    def __init__(self, path: str) -> None:
        self.path = path

    def fail(self, field: str, reason: str) -> ConfigValidationError:
        return ConfigValidationError(path=self.path, field=field, reason=reason)

    def mapping(self, data: Any, field: str) -> dict[str, Any]:
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise self.fail(field, "Must be a mapping/dict")
        return data

    def integer(self, data: dict[str, Any], key: str, field: str, default: int | None, minimum: int = 0) -> int | None:
        value = data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(f"{field}.{key}", f"Must be an integer, got {value!r}")
        if value < minimum:
            raise self.fail(f"{field}.{key}", f"Must be >= {minimum}, got {value}")
        return value

    def number(self, data: dict[str, Any], key: str, field: str, default: float) -> float:
        value = data.get(key, default)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise self.fail(f"{field}.{key}", f"Must be a number, got {value!r}")
        return float(value)

    def build(self, cls: type, data: dict[str, Any], field: str) -> Any:
        """Construct a params dataclass, mapping unknown keys and rule violations to field errors."""
        types = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(data) - set(types))
        if unknown:
            raise self.fail(f"{field}.{unknown[0]}", f"Unknown key; expected one of {sorted(types)}")
        values = dict(data)
        for key, value in data.items():
            # YAML 1.1 reads exponent literals without a dot (1e-6) as strings
            if types[key] in (float, "float") and isinstance(value, str):
                try:
                    values[key] = float(value)
                except ValueError as e:
                    raise self.fail(f"{field}.{key}", f"Must be a number, got {value!r}") from e
        try:
            return cls(**values)
        except (TypeError, DomainError) as e:
            raise self.fail(field, str(e)) from e


def resolve_data_path(path: str, config_dir: str, data_dir: str | None = None) -> str:
    """Resolve a dataset path: absolute as-is, else under data_dir, else under config_dir."""
    candidate = PurePosixPath(path)
    if candidate.is_absolute():
        return path
    return str(PurePosixPath(data_dir or config_dir) / candidate)


def _parse_dataset(reader: _Reader, data: Any, config_dir: str, data_dir: str | None) -> DatasetConfig:
    block = reader.mapping(data, "dataset")
    if not block:
        raise reader.fail("dataset", "Missing required section")
    fmt = block.get("format", "idx")
    if fmt not in DATASET_FORMATS:
        raise reader.fail("dataset.format", f"Must be one of {DATASET_FORMATS}, got {fmt!r}")

    def source(name: str) -> DataSource:
        part = reader.mapping(block.get(name), f"dataset.{name}")
        if "images" not in part:
            raise reader.fail(f"dataset.{name}.images", "Missing required field")
        if fmt == "idx" and "labels" not in part:
            raise reader.fail(f"dataset.{name}.labels", "IDX datasets need a labels file")
        labels = part.get("labels")
        return DataSource(
            images=resolve_data_path(str(part["images"]), config_dir, data_dir),
            labels=None if labels is None else resolve_data_path(str(labels), config_dir, data_dir),
        )

    shape = block.get("image_shape")
    if shape is not None and (
        not isinstance(shape, list) or len(shape) != 3 or not all(isinstance(d, int) and d > 0 for d in shape)
    ):
        raise reader.fail("dataset.image_shape", "Must be [channels, height, width]")
    return DatasetConfig(
        format=fmt,
        train=source("train"),
        test=source("test"),
        num_classes=reader.integer(block, "num_classes", "dataset", 10, minimum=2) or 10,
        image_shape=None if shape is None else (shape[0], shape[1], shape[2]),
        train_size=reader.integer(block, "train_size", "dataset", None, minimum=1),
        test_size=reader.integer(block, "test_size", "dataset", None, minimum=1),
        validation_size=reader.integer(block, "validation_size", "dataset", 0) or 0,
        name=str(block.get("name", "mnist")),
    )


def _parse_model(reader: _Reader, data: Any, num_classes: int) -> ModelConfig:
    block = reader.mapping(data, "model")
    training = reader.mapping(block.get("training"), "model.training")
    if "rng_seed" in training:
        raise reader.fail("model.training.rng_seed", "Derived from the master seed; set 'seed' instead")
    train_config = reader.build(TrainConfig, training, "model.training")

    if "layers" in block:
        raw_layers = block["layers"]
        if not isinstance(raw_layers, list) or not raw_layers:
            raise reader.fail("model.layers", "Must be a non-empty list of layer mappings")
        layers = []
        for index, layer in enumerate(raw_layers):
            field = f"model.layers[{index}]"
            try:
                layers.append(LayerSpec.from_dict(reader.mapping(layer, field)))
            except (KeyError, ValueError, TypeError, DomainError) as e:
                raise reader.fail(field, str(e)) from e
        return ModelConfig(layers=tuple(layers), training=train_config)

    architecture = block.get("architecture", "lenet-small")
    if architecture != "lenet-small":
        raise reader.fail("model.architecture", f"Unknown architecture {architecture!r}")
    dropout = reader.number(block, "dropout_after_pool", "model", 0.5)
    try:
        layers = lenet_small(num_classes, dropout_after_pool=dropout)
    except DomainError as e:
        raise reader.fail("model.dropout_after_pool", str(e)) from e
    return ModelConfig(layers=tuple(layers), training=train_config)


def _parse_attacks(reader: _Reader, data: Any) -> AttackConfig:
    block = reader.mapping(data, "attacks")
    max_samples = reader.integer(block, "max_samples", "attacks", 200, minimum=1) or 200
    selected = {k: v for k, v in block.items() if k != "max_samples"}
    if not selected:
        return AttackConfig(max_samples=max_samples)
    kinds = []
    for name in AttackName:
        if str(name) not in selected:
            continue
        params = reader.mapping(selected.pop(str(name)), f"attacks.{name}")
        kinds.append(AttackKind(name, reader.build(AttackKind.params_type(name), params, f"attacks.{name}")))
    if selected:
        unknown = sorted(selected)[0]
        raise reader.fail(f"attacks.{unknown}", f"Unknown attack; expected one of {[str(a) for a in AttackName]}")
    return AttackConfig(kinds=tuple(kinds), max_samples=max_samples)


def _parse_detector(reader: _Reader, data: Any) -> DetectorConfig:
    block = reader.mapping(data, "detector")
    fraction = reader.number(block, "train_fraction", "detector", 0.5)
    if not 0.0 < fraction < 1.0:
        raise reader.fail("detector.train_fraction", f"Must lie in (0, 1), got {fraction}")
    logreg = reader.build(LogRegConfig, reader.mapping(block.get("logreg"), "detector.logreg"), "detector.logreg")
    return DetectorConfig(train_fraction=fraction, logreg=logreg)


def parse_experiment_config(
    fs: FileSystem,
    config_path: str,
    *,
    data_dir: str | None = None,
) -> ExperimentConfig:
    """Parse an experiment document.

    Args:
        fs: Filesystem
        config_path: Path to the YAML or JSON document
        data_dir: Root for relative dataset paths (default: the config's directory)

    Returns:
        Parsed ExperimentConfig

    Raises:
        ConfigFileNotFoundError: If file doesn't exist
        ConfigParseError: If the document is malformed
        ConfigValidationError: If a field is missing, mistyped or out of range

    Example:
        >>> config = parse_experiment_config(RealFileSystem(), "experiment.yaml")
        >>> config.attacks.names
        (<AttackName.FGSM: 'fgsm'>, ...)
    """
    if not fs.exists(config_path):
        raise ConfigFileNotFoundError(path=config_path)

    try:
        content = fs.read_text(config_path)
    except PermissionError as e:
        raise ConfigParseError(path=config_path, reason=f"Permission denied: {e}") from e

    try:
        data = yaml.safe_load(content)
    except yaml.YAMLError as e:
        raise ConfigParseError(path=config_path, reason=f"Invalid YAML/JSON syntax: {e}") from e

    if not isinstance(data, dict):
        raise ConfigValidationError(
            path=config_path,
            field="root",
            reason="Configuration must be a mapping/dict",
        )

    reader = _Reader(config_path)
    if "seed" not in data:
        raise reader.fail("seed", "Missing required field")
    seed = reader.integer(data, "seed", "root", None)
    assert seed is not None

    known = {"seed", "dataset", "model", "attacks", "artifacts", "detector", "undecided"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise reader.fail(unknown[0], f"Unknown section; expected one of {sorted(known)}")

    config_dir = str(PurePosixPath(config_path).parent)
    dataset = _parse_dataset(reader, data.get("dataset"), config_dir, data_dir)
    artifacts = reader.build(ArtifactConfig, reader.mapping(data.get("artifacts"), "artifacts"), "artifacts")
    undecided = reader.build(UndecidedConfig, reader.mapping(data.get("undecided"), "undecided"), "undecided")

    return ExperimentConfig(
        seed=seed,
        dataset=dataset,
        model=_parse_model(reader, data.get("model"), dataset.num_classes),
        attacks=_parse_attacks(reader, data.get("attacks")),
        artifacts=artifacts,
        detector=_parse_detector(reader, data.get("detector")),
        undecided=undecided,
    )
