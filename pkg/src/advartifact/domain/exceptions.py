"""Domain exceptions - rule violations raised by the toolkit.

Every error carries structured attributes so the CLI can turn it into a
machine-readable error record.
"""


class DomainError(Exception):
    """Base exception for all domain errors."""


class ValidationError(DomainError):
    """Validation error - data doesn't meet domain rules.

    Raised when value objects receive invalid data (e.g. negative
    attack magnitudes or pixels outside [0, 1]).
    """


# --- network -----------------------------------------------------------------


class ModelError(DomainError):
    """Base error for network construction, inference and training."""


class ShapeMismatchError(ModelError):
    """Tensor or layer shapes do not compose."""

    def __init__(self, expected: object, actual: object, context: str = "") -> None:
        """Initialize error with shape details.

        Args:
            expected: Shape that was required
            actual: Shape that was received
            context: Where the mismatch happened
        """
        where = f" in {context}" if context else ""
        super().__init__(f"Shape mismatch{where}: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual
        self.context = context


class InvalidSpecError(ModelError):
    """Layer specification or operation argument is invalid."""


class NonFiniteLossError(ModelError):
    """Training loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        super().__init__(f"Non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


# --- attacks -----------------------------------------------------------------


class AttackError(DomainError):
    """Base error for adversarial and noisy sample crafting."""


class NotCorrectlyClassifiedError(AttackError):
    """Attacks only perturb samples the model classifies correctly."""

    def __init__(self, true_label: int, predicted: int) -> None:
        super().__init__(
            f"Sample is not correctly classified (label {true_label}, predicted {predicted})"
        )
        self.true_label = true_label
        self.predicted = predicted


class NoAdmissiblePairError(AttackError):
    """Every saliency value in the search domain is zero."""

    def __init__(self, iteration: int) -> None:
        super().__init__(f"No admissible feature pair at iteration {iteration}")
        self.iteration = iteration


class DivergenceError(AttackError):
    """Attack objective became non-finite."""

    def __init__(self, step: int, value: float) -> None:
        super().__init__(f"Objective diverged at step {step}: {value}")
        self.step = step
        self.value = value


class EmptyInputError(DomainError):
    """Operation needs at least one element."""


# --- artifacts ---------------------------------------------------------------


class ArtifactError(DomainError):
    """Base error for density and uncertainty features."""


class EmptyClassError(ArtifactError):
    """A class has too few training points for its feature bank."""

    def __init__(self, class_index: int, count: int = 0, required: int = 1) -> None:
        super().__init__(
            f"Class {class_index} has {count} training point(s), need at least {required}"
        )
        self.class_index = class_index
        self.count = count
        self.required = required


class InvalidGridError(ArtifactError):
    """Bandwidth candidate grid is empty or has non-positive entries."""


class UnknownClassError(ArtifactError):
    """Class index is not present in the feature bank."""

    def __init__(self, class_index: int) -> None:
        super().__init__(f"Unknown class: {class_index}")
        self.class_index = class_index


class UnfittedBankError(ArtifactError):
    """Density requested before a bandwidth was fitted."""


# --- detector ----------------------------------------------------------------


class DetectorError(DomainError):
    """Base error for detector fitting and evaluation."""


class DegenerateFeatureError(DetectorError):
    """Feature column has zero variance (or too few samples to z-score)."""

    def __init__(self, feature_index: int, reason: str = "zero variance") -> None:
        super().__init__(f"Feature {feature_index} is degenerate: {reason}")
        self.feature_index = feature_index
        self.reason = reason


class SingleClassError(DetectorError):
    """Binary task received labels from only one class."""


class MissingSetError(DetectorError):
    """A required sample set (normal, noisy or adversarial) is absent."""

    def __init__(self, set_name: str, attack: str | None = None) -> None:
        scope = f" for attack '{attack}'" if attack else ""
        super().__init__(f"Missing '{set_name}' samples{scope}")
        self.set_name = set_name
        self.attack = attack


class EmptyValidationError(DetectorError):
    """No correctly classified validation samples to derive a cutoff from."""


# --- datasets ----------------------------------------------------------------


class DatasetError(DomainError):
    """Base error for dataset ingestion and sampling."""


class BadMagicError(DatasetError):
    """IDX file starts with an unexpected magic number."""

    def __init__(self, path: str, expected: int, actual: int) -> None:
        super().__init__(f"Bad magic number in {path}: expected {expected:#010x}, got {actual:#010x}")
        self.path = path
        self.expected = expected
        self.actual = actual


class CountMismatchError(DatasetError):
    """Image and label files disagree on the number of items."""

    def __init__(self, images: int, labels: int) -> None:
        super().__init__(f"Image count {images} does not match label count {labels}")
        self.images = images
        self.labels = labels


class TruncatedFileError(DatasetError):
    """File is shorter than its header declares."""

    def __init__(self, path: str, expected_bytes: int, actual_bytes: int) -> None:
        super().__init__(
            f"Truncated file {path}: expected {expected_bytes} bytes, got {actual_bytes}"
        )
        self.path = path
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes


class RaggedRowsError(DatasetError):
    """CSV rows are empty, of unequal length or not a declared image size."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"Malformed rows in {path}: {reason}")
        self.path = path
        self.reason = reason


class OutOfRangePixelError(DatasetError):
    """A pixel value lies outside [0, 1]."""

    def __init__(self, path: str, row: int, value: float) -> None:
        super().__init__(f"Pixel value {value} outside [0, 1] in {path}, row {row}")
        self.path = path
        self.row = row
        self.value = value


class TooLargeError(DatasetError):
    """Requested subset is larger than the dataset."""

    def __init__(self, requested: int, available: int) -> None:
        super().__init__(f"Requested {requested} samples but only {available} available")
        self.requested = requested
        self.available = available


# --- configuration -----------------------------------------------------------


class ConfigurationError(DomainError):
    """Base configuration error.

    Raised when:
    - the experiment document is malformed
    - required configuration is missing
    - configuration violates constraints
    """


class ConfigFileNotFoundError(ConfigurationError):
    """Configuration file not found."""

    def __init__(self, path: str, suggestion: str = "Pass --config PATH") -> None:
        """Initialize error with file details.

        Args:
            path: Path where config was expected
            suggestion: How to fix the issue
        """
        super().__init__(f"Configuration file not found: {path}")
        self.path = path
        self.suggestion = suggestion


class ConfigParseError(ConfigurationError):
    """Configuration file parsing failed."""

    def __init__(self, path: str, reason: str) -> None:
        """Initialize error with parse details.

        Args:
            path: Path to config file
            reason: Why parsing failed
        """
        super().__init__(f"Failed to parse {path}: {reason}")
        self.path = path
        self.reason = reason


class ConfigValidationError(ConfigurationError):
    """Configuration validation failed."""

    def __init__(self, path: str, field: str, reason: str) -> None:
        """Initialize error with validation details.

        Args:
            path: Path to config file
            field: Field that failed validation
            reason: Why validation failed
        """
        super().__init__(f"Invalid configuration in {path}: {field} - {reason}")
        self.path = path
        self.field = field
        self.reason = reason


# --- pipeline ----------------------------------------------------------------


class MissingArtifactError(DomainError):
    """A stage needs an artifact that an earlier stage has not written."""

    def __init__(self, name: str, stage: str) -> None:
        super().__init__(f"Missing artifact '{name}'. Run the '{stage}' stage first")
        self.name = name
        self.stage = stage
