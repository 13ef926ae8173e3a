"""Undecided command - uncertainty cutoff and undecided rates."""

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


def undecided_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    verbose: bool = VerboseOption,
) -> None:
    """Fit the uncertainty cutoff and report how often each set is routed to UNDECIDED.

    Writes undecided.json.
    """
    report = run_stage("undecided", pipeline_service.run_undecided, config, out, seed, data_dir, verbose)
    ok(f"Cutoff {report['cutoff']:.6g} (P{report['percentile']:g})")
    for name, rate in report["undecided_rates"].items():
        if isinstance(rate, dict):
            typer.echo(f"  {name}: adversarial {rate['adversarial']:.3f}, noisy {rate['noisy']:.3f}")
        else:
            typer.echo(f"  {name}: {rate:.3f}")
