"""Adapter layer - implementations of protocol interfaces."""

from advartifact.adapters.artifact_store import FileArtifactStore
from advartifact.adapters.filesystem import RealFileSystem

__all__ = [
    "FileArtifactStore",
    "RealFileSystem",
]
