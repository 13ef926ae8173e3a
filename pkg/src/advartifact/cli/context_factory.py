"""Experiment context factory for CLI.

Factory function for creating production experiment contexts.
"""

from advartifact.adapters.artifact_store import FileArtifactStore
from advartifact.adapters.filesystem import RealFileSystem
from advartifact.services import config_service
from advartifact.services.context import ExperimentContext


def get_experiment_context(
    config_path: str,
    out_dir: str,
    seed: int | None = None,
    data_dir: str | None = None,
    progress: bool = True,
) -> ExperimentContext:
    """Build production experiment context.

    Args:
        config_path: Experiment document
        out_dir: Output directory for all artifacts
        seed: Overrides the document's master seed
        data_dir: Root for relative dataset paths
        progress: Show progress bars

    Raises:
        ConfigurationError: If the document is missing or invalid

    Example:
        >>> ctx = get_experiment_context("experiment.yaml", "out")
        >>> pipeline_service.run_train(ctx)
    """
    filesystem = RealFileSystem()
    config = config_service.parse_experiment_config(filesystem, config_path, data_dir=data_dir)
    if seed is not None:
        config = config.with_seed(seed)
    return ExperimentContext(
        filesystem=filesystem,
        store=FileArtifactStore(filesystem, out_dir),
        config=config,
        progress=progress,
    )
