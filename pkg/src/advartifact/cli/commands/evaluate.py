"""Evaluate command - ROC curves and the AUC summary."""

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


def evaluate_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    verbose: bool = VerboseOption,
) -> None:
    """Evaluate the three detectors on the held-out split.

    Writes roc/<kind>_<scope>.csv and summary.json.

    Example:
        $ advartifact evaluate
        attack     uncertainty  density  combined
        fgsm            0.8012   0.7633    0.8420
        ...
        overall         0.8455   0.8290    0.9011
        ✓ combined vs best single feature: +0.0556
    """
    summary = run_stage("evaluate", pipeline_service.run_evaluate, config, out, seed, data_dir, verbose)
    typer.echo(f"{'attack':<10} {'uncertainty':>11} {'density':>8} {'combined':>9}")
    rows = [*summary["per_attack"].items(), ("overall", summary["overall"])]
    for name, aucs in rows:
        typer.echo(
            f"{name:<10} {aucs['auc_uncertainty']:>11.4f} {aucs['auc_density']:>8.4f} "
            f"{aucs['auc_combined']:>9.4f}"
        )
    margin = summary["combined_vs_best_single"]["margin"]
    if margin >= -0.02:
        ok(f"combined vs best single feature: {margin:+.4f}")
    else:
        typer.secho(f"✗ combined vs best single feature: {margin:+.4f}", fg=typer.colors.YELLOW)
