"""Main CLI entry point.

Registers the pipeline stage commands.
"""

import typer

from advartifact.cli.commands import attack, detect, evaluate, features, train, undecided
from advartifact.cli.runner import (
    ConfigOption,
    DataDirOption,
    OutOption,
    SeedOption,
    VerboseOption,
)

app = typer.Typer(
    name="advartifact",
    help="Detect adversarial samples from density and uncertainty artifacts",
    add_completion=False,
)

app.command(name="train", help="Train the network")(train.train_command)

app.command(name="attack", help="Craft adversarial and noisy samples")(attack.attack_command)

app.command(name="features", help="Extract density and uncertainty features")(
    features.features_command
)

app.command(name="detect", help="Fit the combined detector")(detect.detect_command)

app.command(name="evaluate", help="ROC curves and AUC summary")(evaluate.evaluate_command)

app.command(name="undecided", help="Uncertainty cutoff and undecided rates")(
    undecided.undecided_command
)


@app.command(name="all")
def all_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    verbose: bool = VerboseOption,
) -> None:
    """Run every stage in order."""
    train.train_command(config, out, seed, data_dir, verbose)
    attack.attack_command(config, out, seed, data_dir, None, verbose)
    features.features_command(config, out, seed, data_dir, verbose)
    detect.detect_command(config, out, seed, data_dir, verbose)
    evaluate.evaluate_command(config, out, seed, data_dir, verbose)
    undecided.undecided_command(config, out, seed, data_dir, verbose)


@app.command()
def version() -> None:
    """Show version information."""
    from advartifact import __version__

    typer.echo(f"advartifact v{__version__}")


if __name__ == "__main__":
    app()
