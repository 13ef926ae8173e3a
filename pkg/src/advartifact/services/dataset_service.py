"""Dataset service functions.

Loaders for IDX (optionally gzip-compressed) and CSV datasets and seeded
desk-scale subsampling. Loaders reject out-of-range data instead of
clamping it.
"""

import csv
import gzip
import io
import logging
import math

import numpy as np
import numpy.typing as npt

from advartifact.domain.dataset import Dataset
from advartifact.domain.exceptions import (
    BadMagicError,
    CountMismatchError,
    DatasetError,
    OutOfRangePixelError,
    RaggedRowsError,
    TooLargeError,
    TruncatedFileError,
)
from advartifact.domain.seeding import generator
from advartifact.protocols.filesystem import FileSystem

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read(fs: FileSystem, path: str) -> bytes:
    try:
        raw = fs.read_bytes(path)
    except FileNotFoundError as e:
        raise DatasetError(f"Dataset file not found: {path}") from e
    if path.endswith(".gz"):
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise TruncatedFileError(path, -1, len(raw)) from e
    return raw


def _header(path: str, data: bytes, expected_magic: int, dims: int) -> list[int]:
    header_size = 4 * (1 + dims)
    if len(data) < header_size:
        raise TruncatedFileError(path, header_size, len(data))
    magic = int.from_bytes(data[0:4], "big")
    if magic != expected_magic:
        raise BadMagicError(path, expected_magic, magic)
    return [int.from_bytes(data[4 * (i + 1) : 4 * (i + 2)], "big") for i in range(dims)]


def load_idx(
    fs: FileSystem, images_path: str, labels_path: str, num_classes: int | None = None
) -> Dataset:
    """Load an IDX image/label pair, scaling pixel bytes by 1/255.

    Args:
        fs: Filesystem
        images_path: IDX3 image file (``.gz`` is decompressed)
        labels_path: IDX1 label file (``.gz`` is decompressed)
        num_classes: Class count; inferred as max label + 1 when omitted

    Returns:
        Dataset with images [n, 1, rows, cols]

    Raises:
        BadMagicError: If a magic number is wrong
        TruncatedFileError: If a file is shorter than its header promises
        CountMismatchError: If image and label counts differ
    """
    image_bytes = _read(fs, images_path)
    count, rows, cols = _header(images_path, image_bytes, IDX_IMAGES_MAGIC, 3)
    expected = 16 + count * rows * cols
    if len(image_bytes) < expected:
        raise TruncatedFileError(images_path, expected, len(image_bytes))

    label_bytes = _read(fs, labels_path)
    (label_count,) = _header(labels_path, label_bytes, IDX_LABELS_MAGIC, 1)
    if len(label_bytes) < 8 + label_count:
        raise TruncatedFileError(labels_path, 8 + label_count, len(label_bytes))
    if label_count != count:
        raise CountMismatchError(count, label_count)

    pixels = np.frombuffer(image_bytes, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = pixels.reshape(count, 1, rows, cols).astype(np.float64) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    classes = num_classes if num_classes is not None else int(labels.max(initial=-1)) + 1
    logger.info("Loaded %d IDX images of %dx%d from %s", count, rows, cols, images_path)
    return Dataset(images=images, labels=labels, num_classes=max(classes, 1), source=images_path)


def load_csv(
    fs: FileSystem,
    path: str,
    image_shape: tuple[int, int, int] | None = None,
    num_classes: int | None = None,
) -> Dataset:
    """Load ``label,pixel_0,...,pixel_n`` rows with pixels already in [0, 1].

    Without ``image_shape`` the pixels must form a square single-channel image.

    Raises:
        RaggedRowsError: If the file is empty, rows differ in length,
            a value is not numeric or the width is not an image size
        OutOfRangePixelError: If a pixel lies outside [0, 1]
    """
    try:
        text = fs.read_text(path)
    except FileNotFoundError as e:
        raise DatasetError(f"Dataset file not found: {path}") from e
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise RaggedRowsError(path, "file is empty")
    width = len(rows[0])
    if width < 2:
        raise RaggedRowsError(path, "rows need a label and at least one pixel")
    for index, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRowsError(path, f"row {index} has {len(row)} columns, expected {width}")
    try:
        table = np.array(rows, dtype=np.float64)
    except ValueError as e:
        raise RaggedRowsError(path, f"non-numeric value: {e}") from e

    pixel_count = width - 1
    if image_shape is None:
        side = math.isqrt(pixel_count)
        if side * side != pixel_count:
            raise RaggedRowsError(path, f"{pixel_count} pixels is not a square image")
        image_shape = (1, side, side)
    elif math.prod(image_shape) != pixel_count:
        raise RaggedRowsError(path, f"{pixel_count} pixels do not match image shape {image_shape}")

    pixels = table[:, 1:]
    bad = np.argwhere(~((pixels >= 0.0) & (pixels <= 1.0)))
    if len(bad):
        row, col = bad[0]
        raise OutOfRangePixelError(path, int(row), float(pixels[row, col]))
    labels_raw = table[:, 0]
    if np.any(labels_raw < 0) or np.any(labels_raw != np.floor(labels_raw)):
        raise RaggedRowsError(path, "labels must be non-negative integers")
    labels = labels_raw.astype(np.int64)
    classes = num_classes if num_classes is not None else int(labels.max()) + 1
    logger.info("Loaded %d CSV rows from %s", len(rows), path)
    return Dataset(
        images=pixels.reshape((len(rows),) + image_shape),
        labels=labels,
        num_classes=classes,
        source=path,
    )


def _stratified_quotas(counts: npt.NDArray[np.int64], n: int) -> npt.NDArray[np.int64]:
    """Largest-remainder allocation of n over classes proportional to counts."""
    exact = n * counts / counts.sum()
    quotas = np.floor(exact).astype(np.int64)
    order = np.argsort(-(exact - quotas), kind="stable")
    for class_index in order[: n - int(quotas.sum())]:
        quotas[class_index] += 1
    return np.minimum(quotas, counts)


def subset_indices(dataset: Dataset, n: int, seed: int, stratified: bool) -> npt.NDArray[np.int64]:
    """Sorted indices of a seeded sample without replacement.

    Raises:
        TooLargeError: If n exceeds the dataset size
    """
    if n > len(dataset):
        raise TooLargeError(n, len(dataset))
    if n < 0:
        raise DatasetError(f"subset size must be >= 0, got {n}")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if not stratified:
        chosen = generator(seed, "subset").choice(len(dataset), size=n, replace=False)
        return np.sort(chosen).astype(np.int64)
    counts = np.bincount(dataset.labels, minlength=dataset.num_classes).astype(np.int64)
    picks = []
    for class_index, quota in enumerate(_stratified_quotas(counts, n)):
        members = np.flatnonzero(dataset.labels == class_index)
        picks.append(generator(seed, "subset", class_index).choice(members, size=int(quota), replace=False))
    return np.sort(np.concatenate(picks)).astype(np.int64)


def subset(dataset: Dataset, n: int, seed: int, stratified: bool = True) -> Dataset:
    """Seeded subsample of n samples; stratified mode keeps class proportions.

    Raises:
        TooLargeError: If n exceeds the dataset size
    """
    return dataset.take(subset_indices(dataset, n, seed, stratified))


def holdout(dataset: Dataset, n: int, seed: int) -> tuple[Dataset, Dataset]:
    """Split off a stratified held-out set of n samples; returns (rest, held_out)."""
    held = subset_indices(dataset, n, seed, stratified=True)
    rest = np.setdiff1d(np.arange(len(dataset)), held)
    return dataset.take(rest), dataset.take(held, split="validation")
