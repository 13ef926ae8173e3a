"""JSON / CSV artifact store.

Writes experiment artifacts below one root directory through a
FileSystem. JSON uses sorted keys and two-space indentation; floats are
written with ``repr`` so they round-trip exactly.
"""

import csv
import hashlib
import io
import json
from collections.abc import Iterable, Sequence
from pathlib import PurePosixPath
from typing import Any

from advartifact.protocols.filesystem import FileSystem


def _format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


class FileArtifactStore:
    """Artifact store rooted at ``root`` on ``filesystem``.

    Implements ArtifactStore protocol.

    Example:
        >>> store = FileArtifactStore(RealFileSystem(), "out")
        >>> digest = store.write_json("model.json", model.to_dict())
    """

    def __init__(self, filesystem: FileSystem, root: str) -> None:
        self.filesystem = filesystem
        self.root = root

    def path(self, name: str) -> str:
        return str(PurePosixPath(self.root) / name)

    def exists(self, name: str) -> bool:
        return self.filesystem.exists(self.path(name))

    def _write(self, name: str, text: str) -> str:
        target = self.path(name)
        parent = str(PurePosixPath(target).parent)
        if not self.filesystem.exists(parent):
            self.filesystem.mkdir(parent, parents=True)
        payload = text.encode("utf-8")
        self.filesystem.write_bytes(target, payload)
        return hashlib.sha256(payload).hexdigest()

    def write_json(self, name: str, data: dict[str, Any]) -> str:
        return self._write(name, json.dumps(data, sort_keys=True, indent=2) + "\n")

    def read_json(self, name: str) -> dict[str, Any]:
        data: dict[str, Any] = json.loads(self.filesystem.read_text(self.path(name)))
        return data

    def write_jsonl(self, name: str, records: Iterable[dict[str, Any]]) -> str:
        lines = [json.dumps(record, sort_keys=True) for record in records]
        return self._write(name, "".join(line + "\n" for line in lines))

    def read_jsonl(self, name: str) -> list[dict[str, Any]]:
        text = self.filesystem.read_text(self.path(name))
        return [json.loads(line) for line in text.splitlines() if line.strip()]

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
        return self._write(name, buffer.getvalue())

    def read_csv(self, name: str) -> list[dict[str, str]]:
        reader = csv.DictReader(io.StringIO(self.filesystem.read_text(self.path(name))))
        return list(reader)
