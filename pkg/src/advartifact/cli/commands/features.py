"""Features command - density and uncertainty features."""

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


def features_command(
    config: str = ConfigOption,
    out: str = OutOption,
    seed: int | None = SeedOption,
    data_dir: str | None = DataDirOption,
    verbose: bool = VerboseOption,
) -> None:
    """Fit the feature bank and extract features for every sample set.

    Writes bank.json, features.csv and density_walk.csv.
    """
    records = run_stage("features", pipeline_service.run_features, config, out, seed, data_dir, verbose)
    ok(f"Extracted features for {len(records)} samples")
