"""Protocol layer - interface definitions using typing.Protocol.

Any class implementing the methods satisfies the protocol.
"""

from advartifact.protocols.artifact_store import ArtifactStore
from advartifact.protocols.filesystem import FileSystem

__all__ = [
    "ArtifactStore",
    "FileSystem",
]
