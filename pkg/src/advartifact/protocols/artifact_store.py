"""Artifact store protocol.

Named experiment outputs (models, banks, detectors, tables, reports)
stored under one output directory.
"""

from collections.abc import Iterable, Sequence
from typing import Any, Protocol


class ArtifactStore(Protocol):
    """Protocol for reading and writing experiment artifacts.

    Every write returns the sha256 hex digest of the bytes written, so
    callers can record them in a manifest. Serialization is
    byte-deterministic: equal inputs produce equal files.

    Example implementations:
        - FileArtifactStore (JSON / JSON-lines / CSV on a FileSystem)
    """

    def path(self, name: str) -> str:
        """Full path of artifact ``name``."""
        ...

    def exists(self, name: str) -> bool:
        """Check if artifact ``name`` exists."""
        ...

    def write_json(self, name: str, data: dict[str, Any]) -> str:
        """Write one JSON document."""
        ...

    def read_json(self, name: str) -> dict[str, Any]:
        """Read one JSON document.

        Raises:
            FileNotFoundError: If the artifact doesn't exist
        """
        ...

    def write_jsonl(self, name: str, records: Iterable[dict[str, Any]]) -> str:
        """Write one JSON document per line."""
        ...

    def read_jsonl(self, name: str) -> list[dict[str, Any]]:
        """Read a JSON-lines file."""
        ...

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """Write a CSV table with a header row."""
        ...

    def read_csv(self, name: str) -> list[dict[str, str]]:
        """Read a CSV table into one dict per row keyed by header."""
        ...
