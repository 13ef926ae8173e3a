"""Detect command - fit the combined detector."""

import typer

from advartifact.cli.runner import (
    ConfigOption,
    DataDirOption,
    OutOption,
    SeedOption,
    VerboseOption,
    ok,
    run_stage,
)
from advartifact.services import pipeline_service


def detect_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    verbose: bool = VerboseOption,
) -> None:
    """Fit the logistic-regression detector on the detector training split.

    Writes detector.json and detector_split.json.
    """
    detector = run_stage("detect", pipeline_service.run_detect, config, out, seed, data_dir, verbose)
    ok("Detector trained")
    typer.echo(f"  weights: uncertainty {detector.weights[0]:+.4f}, density {detector.weights[1]:+.4f}")
    typer.echo(f"  loss: {detector.initial_loss:.4f} -> {detector.final_loss:.4f}")
