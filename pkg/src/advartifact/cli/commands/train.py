"""Train command - build and train the network."""

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


def train_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    verbose: bool = VerboseOption,
) -> None:
    """Train the configured network and report accuracy.

    Writes model.json and train_report.json.

    Example:
        $ advartifact train --config experiment.yaml --out out
        ✓ Trained on 9500 samples
          train accuracy: 0.9912
          test accuracy:  0.9780
    """
    report = run_stage("train", pipeline_service.run_train, config, out, seed, data_dir, verbose)
    ok(f"Trained on {report['train_samples']} samples")
    typer.echo(f"  train accuracy: {report['train_accuracy']:.4f}")
    typer.echo(f"  test accuracy:  {report['test_accuracy']:.4f}")
    typer.echo(f"  loss: {report['initial_loss']:.4f} -> {report['final_loss']:.4f}")
