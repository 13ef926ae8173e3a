"""Unit tests for dataset service.

Loaders read through FakeFileSystem, so IDX and CSV files are built in
memory.
"""

import numpy as np
import pytest

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
from advartifact.services import dataset_service
from tests.builders import csv_text, gzipped, half_images, idx_images, idx_labels
from tests.fakes.fake_filesystem import FakeFileSystem

PIXELS = np.array([[[0, 255], [51, 102]], [[255, 255], [0, 0]], [[1, 2], [3, 4]]], dtype=np.uint8)
LABELS = np.array([7, 0, 3])


def _toy_dataset(n: int = 30, num_classes: int = 3) -> Dataset:
    labels = np.arange(n) % num_classes
    images = np.linspace(0.0, 1.0, n * 4).reshape(n, 1, 2, 2)
    return Dataset(images=images, labels=labels, num_classes=num_classes)


class TestLoadIdx:
    """Tests for load_idx."""

    def test_scales_bytes(self, fake_filesystem: FakeFileSystem) -> None:
        """Should divide pixel bytes by 255 and keep label order."""
        fake_filesystem.create_file("/data/img", idx_images(PIXELS))
        fake_filesystem.create_file("/data/lbl", idx_labels(LABELS))

        dataset = dataset_service.load_idx(fake_filesystem, "/data/img", "/data/lbl", num_classes=10)

        assert dataset.images.shape == (3, 1, 2, 2)
        assert dataset.images[0, 0].tolist() == [[0.0, 1.0], [0.2, 0.4]]
        assert dataset.labels.tolist() == [7, 0, 3]
        assert dataset.num_classes == 10

    def test_gzip_files(self, fake_filesystem: FakeFileSystem) -> None:
        """Should decompress .gz files transparently."""
        fake_filesystem.create_file("/data/img.gz", gzipped(idx_images(PIXELS)))
        fake_filesystem.create_file("/data/lbl.gz", gzipped(idx_labels(LABELS)))

        dataset = dataset_service.load_idx(fake_filesystem, "/data/img.gz", "/data/lbl.gz")

        assert len(dataset) == 3
        assert dataset.num_classes == 8

    def test_bad_magic(self, fake_filesystem: FakeFileSystem) -> None:
        """Should reject a wrong magic number."""
        fake_filesystem.create_file("/data/img", idx_images(PIXELS, magic=0x00000801))
        fake_filesystem.create_file("/data/lbl", idx_labels(LABELS))

        with pytest.raises(BadMagicError):
            dataset_service.load_idx(fake_filesystem, "/data/img", "/data/lbl")

    def test_count_mismatch(self, fake_filesystem: FakeFileSystem) -> None:
        """Should reject differing image and label counts."""
        fake_filesystem.create_file("/data/img", idx_images(PIXELS))
        fake_filesystem.create_file("/data/lbl", idx_labels(LABELS[:2]))

        with pytest.raises(CountMismatchError):
            dataset_service.load_idx(fake_filesystem, "/data/img", "/data/lbl")

    def test_truncated_images(self, fake_filesystem: FakeFileSystem) -> None:
        """Should reject a file shorter than its header promises."""
        fake_filesystem.create_file("/data/img", idx_images(PIXELS)[:-3])
        fake_filesystem.create_file("/data/lbl", idx_labels(LABELS))

        with pytest.raises(TruncatedFileError):
            dataset_service.load_idx(fake_filesystem, "/data/img", "/data/lbl")

    def test_missing_file(self, fake_filesystem: FakeFileSystem) -> None:
        """Should raise DatasetError for a missing file."""
        with pytest.raises(DatasetError, match="not found"):
            dataset_service.load_idx(fake_filesystem, "/data/none", "/data/lbl")


class TestLoadCsv:
    """Tests for load_csv."""

    def test_square_images_inferred(self, fake_filesystem: FakeFileSystem) -> None:
        """Should infer [1, side, side] from the row width."""
        images, labels = half_images(6, seed=1)
        fake_filesystem.create_file("/data/train.csv", csv_text(images, labels))

        dataset = dataset_service.load_csv(fake_filesystem, "/data/train.csv")

        assert dataset.image_shape == (1, 4, 4)
        assert np.array_equal(dataset.images, images)
        assert dataset.labels.tolist() == labels.tolist()
        assert dataset.num_classes == 2

    def test_explicit_shape(self, fake_filesystem: FakeFileSystem) -> None:
        """Should honour an explicit image shape."""
        fake_filesystem.create_file("/data/t.csv", "1,0.1,0.2,0.3,0.4,0.5,0.6\n0,0,0,0,0,0,0\n")

        dataset = dataset_service.load_csv(fake_filesystem, "/data/t.csv", image_shape=(1, 2, 3))

        assert dataset.images.shape == (2, 1, 2, 3)

    def test_pixel_above_one(self, fake_filesystem: FakeFileSystem) -> None:
        """Should reject pixels outside [0, 1] instead of clamping."""
        fake_filesystem.create_file("/data/t.csv", "0,0.5,1.5,0.1,0.2\n")

        with pytest.raises(OutOfRangePixelError):
            dataset_service.load_csv(fake_filesystem, "/data/t.csv")

    @pytest.mark.parametrize(
        "content",
        ["", "0,0.1,0.2,0.3,0.4\n1,0.1,0.2\n", "0,0.1,abc,0.3,0.4\n", "0,0.1,0.2,0.3\n", "-1,0.1,0.2,0.3,0.4\n"],
    )
    def test_malformed_rows(self, fake_filesystem: FakeFileSystem, content: str) -> None:
        """Should reject empty, ragged, non-numeric, non-square or negative-label files."""
        fake_filesystem.create_file("/data/t.csv", content)

        with pytest.raises(RaggedRowsError):
            dataset_service.load_csv(fake_filesystem, "/data/t.csv")


class TestSubset:
    """Tests for subsampling."""

    def test_seeded_and_sorted(self) -> None:
        """Should return the same sorted indices for the same seed."""
        dataset = _toy_dataset()

        first = dataset_service.subset_indices(dataset, 10, seed=4, stratified=False)

        assert np.array_equal(first, dataset_service.subset_indices(dataset, 10, seed=4, stratified=False))
        assert first.tolist() == sorted(set(first.tolist()))

    def test_stratified_keeps_proportions(self) -> None:
        """Should draw equally from balanced classes."""
        subset = dataset_service.subset(_toy_dataset(), 12, seed=0)

        assert np.bincount(subset.labels).tolist() == [4, 4, 4]

    def test_too_large(self) -> None:
        """Should raise TooLargeError when n exceeds the dataset."""
        with pytest.raises(TooLargeError):
            dataset_service.subset(_toy_dataset(5), 6, seed=0)

    def test_holdout_is_disjoint(self) -> None:
        """Should split off a validation set disjoint from the rest."""
        dataset = _toy_dataset()

        rest, held = dataset_service.holdout(dataset, 9, seed=2)

        assert len(rest) == 21
        assert len(held) == 9
        assert held.split == "validation"
        rest_rows = {tuple(img.ravel()) for img in rest.images}
        assert not any(tuple(img.ravel()) in rest_rows for img in held.images)
