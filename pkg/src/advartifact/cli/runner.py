"""Shared CLI plumbing: options, logging setup and error-to-exit-code mapping."""

import logging
from collections.abc import Callable
from typing import Any

import typer

from advartifact.adapters.artifact_store import FileArtifactStore
from advartifact.adapters.filesystem import RealFileSystem
from advartifact.cli.context_factory import get_experiment_context
from advartifact.domain.exceptions import ConfigurationError, DomainError
from advartifact.services import pipeline_service
from advartifact.services.context import ExperimentContext

EXIT_CONFIG_ERROR = 2
EXIT_PIPELINE_ERROR = 3

ConfigOption = typer.Option("experiment.yaml", "--config", "-c", help="Experiment document (YAML or JSON)")
OutOption = typer.Option("out", "--out", "-o", help="Output directory")
SeedOption = typer.Option(None, "--seed", help="Override the master seed")
DataDirOption = typer.Option(
    None, "--data-dir", envvar="ADVARTIFACT_DATA_DIR", help="Root for relative dataset paths"
)
VerboseOption = typer.Option(False, "--verbose", "-v", help="Debug logging")


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def run_stage(
    stage: str,
    action: Callable[[ExperimentContext], Any],
    config: str,
    out: str,
    seed: int | None,
    data_dir: str | None,
    verbose: bool,
) -> Any:
    """Run one pipeline stage, turning domain errors into exit codes.

    Exit codes:
    - 2: Configuration error
    - 3: Any other pipeline error

    Both write ``error.json`` to the output directory.
    """
    configure_logging(verbose)
    try:
        ctx = get_experiment_context(config, out, seed=seed, data_dir=data_dir)
        return action(ctx)
    except ConfigurationError as e:
        _fail(out, stage, e, EXIT_CONFIG_ERROR)
    except DomainError as e:
        _fail(out, stage, e, EXIT_PIPELINE_ERROR)


def _fail(out: str, stage: str, error: DomainError, code: int) -> None:
    try:
        pipeline_service.write_error(FileArtifactStore(RealFileSystem(), out), stage, error)
    except OSError as e:
        logging.getLogger(__name__).warning("Could not write error record: %s", e)
    typer.secho(f"✗ {stage} failed: {error}", fg=typer.colors.RED, err=True)
    raise typer.Exit(code=code)


def ok(message: str) -> None:
    typer.secho(f"✓ {message}", fg=typer.colors.GREEN)
