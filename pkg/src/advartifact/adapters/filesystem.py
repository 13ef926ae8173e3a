"""Real filesystem adapter.

Filesystem operations using pathlib.Path.
"""

from pathlib import Path


class RealFileSystem:
    """Real filesystem operations.

    Implements FileSystem protocol.

    Example:
        >>> fs = RealFileSystem()
        >>> fs.exists("experiment.yaml")
        True
        >>> content = fs.read_text("experiment.yaml")
    """

    def read_text(self, path: str) -> str:
        return Path(path).read_text()

    def read_bytes(self, path: str) -> bytes:
        return Path(path).read_bytes()

    def write_text(self, path: str, content: str) -> None:
        Path(path).write_text(content)

    def write_bytes(self, path: str, content: bytes) -> None:
        Path(path).write_bytes(content)

    def exists(self, path: str) -> bool:
        return Path(path).exists()

    def mkdir(self, path: str, parents: bool = False) -> None:
        """Create directory.

        Raises:
            FileExistsError: If directory exists and parents=False
        """
        Path(path).mkdir(parents=parents, exist_ok=parents)
