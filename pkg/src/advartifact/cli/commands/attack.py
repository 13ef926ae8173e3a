"""Attack command - craft adversarial and noisy samples."""

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
from advartifact.domain.attack import AttackName
from advartifact.services import pipeline_service


def attack_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    attack: list[AttackName] | None = typer.Option(
        None, "--attack", "-a", help="Run only these attacks (repeatable)"
    ),
    verbose: bool = VerboseOption,
) -> None:
    """Attack correctly classified test samples.

    Writes attacks/<name>.jsonl per attack and attack_stats.csv.

    Example:
        $ advartifact attack --attack fgsm --attack jsma
        ✓ fgsm: 200 samples, mean L2 5.312, adversarial accuracy 0.071
        ✓ jsma: 200 samples, mean L2 4.021, adversarial accuracy 0.045
    """
    only = set(attack) if attack else None
    stats = run_stage(
        "attack", lambda ctx: pipeline_service.run_attacks(ctx, only), config, out, seed, data_dir, verbose
    )
    for row in stats:
        ok(
            f"{row.kind}: {row.count} samples, mean L2 {row.mean_l2:.3f}, "
            f"adversarial accuracy {row.adv_accuracy:.3f}, noisy accuracy {row.noisy_accuracy:.3f}"
        )
