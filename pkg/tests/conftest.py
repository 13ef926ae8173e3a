"""Pytest configuration and fixtures.

Shared fixtures available to all tests.
"""

import pytest

from advartifact.adapters.artifact_store import FileArtifactStore
from tests.fakes.fake_filesystem import FakeFileSystem


@pytest.fixture
def fake_filesystem() -> FakeFileSystem:
    """Provide fresh fake filesystem for each test.

    Automatically reset between tests.

    Returns:
        Empty FakeFileSystem

    Example:
        def test_with_filesystem(fake_filesystem):
            fake_filesystem.create_file("/data/train.csv", "0,0.5")
            assert fake_filesystem.read_text("/data/train.csv") == "0,0.5"
    """
    fs = FakeFileSystem()
    yield fs
    # Cleanup after test
    fs.reset()


@pytest.fixture
def fake_store(fake_filesystem: FakeFileSystem) -> FileArtifactStore:
    """Artifact store rooted at /out on the fake filesystem."""
    return FileArtifactStore(fake_filesystem, "/out")
