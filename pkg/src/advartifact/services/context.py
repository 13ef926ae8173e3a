"""Experiment context - dependency container for pipeline stages.

ExperimentContext holds everything a stage needs: the filesystem for
datasets, the artifact store for outputs and the parsed configuration.
"""

from dataclasses import dataclass

from advartifact.domain.config import ExperimentConfig
from advartifact.protocols.artifact_store import ArtifactStore
from advartifact.protocols.filesystem import FileSystem


@dataclass(frozen=True)
class ExperimentContext:
    """Pipeline dependency container.

    Pattern:
        - Production: RealFileSystem and a FileArtifactStore on it
        - Testing: FakeFileSystem and a FileArtifactStore on the fake

    Attributes:
        filesystem: Dataset access
        store: Output artifacts
        config: Experiment configuration (seed override already applied)
        progress: Show tqdm progress bars
    """

    filesystem: FileSystem
    store: ArtifactStore
    config: ExperimentConfig
    progress: bool = False
