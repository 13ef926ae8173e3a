"""Experiment pipeline stages.

Each stage reads its inputs from the artifact store, writes its outputs
back and records them in ``manifest.json``. All randomness derives from
the master seed through per-stage and per-sample streams, so reruns
reproduce every file byte for byte.
"""

import hashlib
import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from tqdm import tqdm

from advartifact.domain.artifacts import ArtifactFeatures
from advartifact.domain.attack import AttackName, AttackResult, AttackStats, BimParams
from advartifact.domain.dataset import Dataset
from advartifact.domain.detector import (
    NO_ATTACK,
    UNDECIDED,
    DetectorEvaluation,
    DetectorKind,
    DetectorModel,
    FeatureRecord,
    SampleSet,
)
from advartifact.domain.exceptions import (
    EmptyValidationError,
    MissingArtifactError,
    NotCorrectlyClassifiedError,
)
from advartifact.domain.network import NetworkModel
from advartifact.domain.seeding import derive_seed
from advartifact.protocols.artifact_store import ArtifactStore
from advartifact.services import (
    artifact_service,
    attack_service,
    dataset_service,
    detector_service,
    network_service,
)
from advartifact.services.context import ExperimentContext

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
TRAIN_REPORT_FILE = "train_report.json"
ATTACK_STATS_FILE = "attack_stats.csv"
BANK_FILE = "bank.json"
FEATURES_FILE = "features.csv"
WALKS_FILE = "density_walk.csv"
DETECTOR_FILE = "detector.json"
SPLIT_FILE = "detector_split.json"
SUMMARY_FILE = "summary.json"
UNDECIDED_FILE = "undecided.json"
MANIFEST_FILE = "manifest.json"
ERROR_FILE = "error.json"

FEATURE_COLUMNS = ("sample_id", "set", "attack_kind", "predicted_class", "uncertainty", "neg_log_density")


def attack_file(name: AttackName | str) -> str:
    return f"attacks/{name}.jsonl"


def roc_file(kind: DetectorKind, scope: str) -> str:
    return f"roc/{kind}_{scope}.csv"


@dataclass(frozen=True)
class Splits:
    """Training, held-out validation and test data of one experiment."""

    train: Dataset
    validation: Dataset | None
    test: Dataset


def config_hash(ctx: ExperimentContext) -> str:
    canonical = json.dumps(ctx.config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def stage_seed(ctx: ExperimentContext, stage: str) -> int:
    return derive_seed(ctx.config.seed, stage)


def _progress(ctx: ExperimentContext, items: Iterable[Any], desc: str, total: int | None = None) -> Iterable[Any]:
    return tqdm(items, desc=desc, total=total, disable=not ctx.progress, leave=False)


def _record(ctx: ExperimentContext, stage: str, seed: int, written: dict[str, str]) -> None:
    """Merge this stage's outputs into the manifest."""
    manifest: dict[str, Any] = (
        ctx.store.read_json(MANIFEST_FILE) if ctx.store.exists(MANIFEST_FILE) else {"files": {}}
    )
    digest = config_hash(ctx)
    manifest["config_hash"] = digest
    manifest["seed"] = ctx.config.seed
    for name, sha256 in written.items():
        manifest["files"][name] = {"sha256": sha256, "stage": stage, "config_hash": digest, "seed": seed}
    ctx.store.write_json(MANIFEST_FILE, manifest)


def write_error(store: ArtifactStore, stage: str, error: Exception) -> None:
    """Machine-readable error record for a failed stage."""
    store.write_json(
        ERROR_FILE,
        {"error": type(error).__name__, "message": str(error), "stage": stage},
    )


# --- data --------------------------------------------------------------------


def _load(ctx: ExperimentContext, images: str, labels: str | None) -> Dataset:
    ds = ctx.config.dataset
    if ds.format == "idx":
        assert labels is not None
        return dataset_service.load_idx(ctx.filesystem, images, labels, ds.num_classes)
    return dataset_service.load_csv(ctx.filesystem, images, ds.image_shape, ds.num_classes)


def load_splits(ctx: ExperimentContext) -> Splits:
    """Load, subsample and split the configured dataset."""
    ds = ctx.config.dataset
    seed = stage_seed(ctx, "data")
    train = _load(ctx, ds.train.images, ds.train.labels)
    test = _load(ctx, ds.test.images, ds.test.labels)
    if ds.train_size is not None:
        train = dataset_service.subset(train, ds.train_size, derive_seed(seed, "train"), stratified=True)
    if ds.test_size is not None:
        test = dataset_service.subset(test, ds.test_size, derive_seed(seed, "test"), stratified=True)
    validation = None
    if ds.validation_size > 0:
        train, validation = dataset_service.holdout(train, ds.validation_size, derive_seed(seed, "validation"))
    return Splits(train=train, validation=validation, test=replace(test, split="test"))


def load_model(ctx: ExperimentContext) -> NetworkModel:
    if not ctx.store.exists(MODEL_FILE):
        raise MissingArtifactError(MODEL_FILE, "train")
    return NetworkModel.from_dict(ctx.store.read_json(MODEL_FILE))


def load_attack_results(ctx: ExperimentContext) -> dict[AttackName, list[AttackResult]]:
    """Results of every configured attack that has been run."""
    results = {}
    for name in ctx.config.attacks.names:
        if ctx.store.exists(attack_file(name)):
            results[name] = [AttackResult.from_dict(r) for r in ctx.store.read_jsonl(attack_file(name))]
    if not results:
        raise MissingArtifactError("attacks/*.jsonl", "attack")
    return results


def load_feature_records(ctx: ExperimentContext) -> list[FeatureRecord]:
    if not ctx.store.exists(FEATURES_FILE):
        raise MissingArtifactError(FEATURES_FILE, "features")
    return [FeatureRecord.from_row(row) for row in ctx.store.read_csv(FEATURES_FILE)]


# --- stages ------------------------------------------------------------------


def run_train(ctx: ExperimentContext) -> dict[str, Any]:
    """Build and train the network; write the model and an accuracy report."""
    config = ctx.config
    seed = stage_seed(ctx, "train")
    splits = load_splits(ctx)
    model = network_service.build_model(
        config.model.layers, splits.train.image_shape, splits.train.num_classes, derive_seed(seed, "init")
    )
    training = replace(config.model.training, rng_seed=derive_seed(seed, "sgd"))
    model, history = network_service.train_with_history(
        model, splits.train.images, splits.train.onehot(), training, progress=ctx.progress
    )
    report = {
        "train_samples": len(splits.train),
        "test_samples": len(splits.test),
        "train_accuracy": network_service.evaluate_accuracy(model, splits.train.images, splits.train.labels),
        "test_accuracy": network_service.evaluate_accuracy(model, splits.test.images, splits.test.labels),
        "initial_loss": history.initial_loss,
        "final_loss": history.final_loss,
        "epoch_losses": list(history.epoch_losses),
    }
    written = {
        MODEL_FILE: ctx.store.write_json(MODEL_FILE, model.to_dict()),
        TRAIN_REPORT_FILE: ctx.store.write_json(TRAIN_REPORT_FILE, report),
    }
    _record(ctx, "train", seed, written)
    logger.info("Test accuracy %.4f", report["test_accuracy"])
    return report


def correctly_classified(ctx: ExperimentContext, model: NetworkModel, test: Dataset) -> list[int]:
    """Test indices the model classifies correctly, capped at attacks.max_samples."""
    predictions = network_service.predict_batch(model, test.images)
    correct = np.flatnonzero(predictions == test.labels)
    skipped = len(test) - len(correct)
    if skipped:
        logger.info("Skipping %d misclassified test sample(s): attacks need a correct prediction", skipped)
    return [int(i) for i in correct[: ctx.config.attacks.max_samples]]


def run_attacks(ctx: ExperimentContext, only: set[AttackName] | None = None) -> list[AttackStats]:
    """Attack the correctly classified test samples; write JSONL results and the stats table."""
    seed = stage_seed(ctx, "attack")
    model = load_model(ctx)
    test = load_splits(ctx).test
    sample_ids = correctly_classified(ctx, model, test)
    attacks = ctx.config.attacks if only is None else ctx.config.attacks.only(only)

    written = {}
    for kind in attacks.kinds:
        results = []
        for sample_id in _progress(ctx, sample_ids, str(kind.name)):
            try:
                results.append(
                    attack_service.run_attack(
                        model,
                        test.images[sample_id],
                        int(test.labels[sample_id]),
                        kind,
                        seed=derive_seed(seed, str(kind.name), sample_id),
                        sample_id=sample_id,
                    )
                )
            except NotCorrectlyClassifiedError as e:
                logger.warning("Skipping sample %d: %s", sample_id, e)
        written[attack_file(kind.name)] = ctx.store.write_jsonl(
            attack_file(kind.name), (r.to_dict() for r in results)
        )
        logger.info("%s: %d/%d successful", kind.name, sum(r.success for r in results), len(results))

    stats = [
        attack_service.summarize_attack(model, name, results)
        for name, results in load_attack_results(ctx).items()
        if results
    ]
    header = ("attack", "count", "mean_l2", "adv_accuracy", "mean_l0", "success_rate", "noisy_accuracy")
    written[ATTACK_STATS_FILE] = ctx.store.write_csv(
        ATTACK_STATS_FILE, header, ([s.to_dict()[h] for h in header] for s in stats)
    )
    _record(ctx, "attack", seed, written)
    return stats


def _walk_params(ctx: ExperimentContext) -> BimParams:
    for kind in ctx.config.attacks.kinds:
        if kind.name is AttackName.BIM_B and isinstance(kind.params, BimParams):
            return kind.params
    return BimParams()


def run_features(ctx: ExperimentContext) -> list[FeatureRecord]:
    """Fit the feature bank and extract features for normal, noisy and adversarial samples."""
    config = ctx.config
    seed = stage_seed(ctx, "features")
    T = config.artifacts.mc_samples
    model = load_model(ctx)
    splits = load_splits(ctx)
    attacks = load_attack_results(ctx)

    bank = artifact_service.build_feature_bank(
        model, splits.train.images, splits.train.labels, cap=config.artifacts.bank_cap, seed=derive_seed(seed, "bank")
    )
    grid = artifact_service.default_bandwidth_grid(bank, config.artifacts.grid_size, seed=derive_seed(seed, "grid"))
    bank = bank.with_bandwidth(artifact_service.fit_bandwidth(bank, grid))

    def features(x: Any, *stream: int | str) -> ArtifactFeatures:
        return artifact_service.extract_features(model, bank, x, T, derive_seed(seed, *stream))

    originals: dict[int, Any] = {}
    for results in attacks.values():
        for result in results:
            assert result.sample_id is not None
            originals.setdefault(result.sample_id, result.x)

    records = [
        FeatureRecord(sample_id, SampleSet.NORMAL, NO_ATTACK, features(originals[sample_id], "normal", sample_id))
        for sample_id in _progress(ctx, sorted(originals), "normal features")
    ]
    for name, results in attacks.items():
        for result in _progress(ctx, results, f"{name} features"):
            assert result.sample_id is not None
            sid = result.sample_id
            records.append(
                FeatureRecord(sid, SampleSet.ADVERSARIAL, str(name), features(result.x_adv, "adv", str(name), sid))
            )
            records.append(
                FeatureRecord(sid, SampleSet.NOISY, str(name), features(result.x_noisy, "noisy", str(name), sid))
            )

    walk_rows = []
    dropped = 0
    params = _walk_params(ctx)
    onehot = np.eye(model.num_classes)
    walk_ids = sorted(originals)[: config.artifacts.walks]
    for walk_index, sample_id in enumerate(_progress(ctx, walk_ids, "density walks")):
        label = int(splits.test.labels[sample_id])
        walk = artifact_service.density_walk(model, bank, originals[sample_id], onehot[label], params)
        dropped += walk.source_density_dropped
        crossover = "" if walk.crossover is None else walk.crossover
        walk_rows += [
            (
                walk_index,
                sample_id,
                r.iteration,
                r.log_density_source,
                r.log_density_adv,
                walk.source_class,
                walk.final_class,
                crossover,
            )
            for r in walk.records
        ]
    if walk_ids:
        logger.info("Source-class density dropped along %d of %d walks", dropped, len(walk_ids))

    written = {
        BANK_FILE: ctx.store.write_json(BANK_FILE, bank.to_dict()),
        FEATURES_FILE: ctx.store.write_csv(
            FEATURES_FILE, FEATURE_COLUMNS, ([r.to_row()[c] for c in FEATURE_COLUMNS] for r in records)
        ),
        WALKS_FILE: ctx.store.write_csv(
            WALKS_FILE,
            ("walk", "sample_id", "iteration", "logK_source", "logK_adv", "source_class", "final_class", "crossover"),
            walk_rows,
        ),
    }
    _record(ctx, "features", seed, written)
    return records


def run_detect(ctx: ExperimentContext) -> DetectorModel:
    """Split samples into detector-train and evaluation sets and fit the combined detector."""
    seed = stage_seed(ctx, "detect")
    records = load_feature_records(ctx)
    normal_ids = [r.sample_id for r in records if r.sample_set is SampleSet.NORMAL]
    train_ids, eval_ids = detector_service.detector_split(
        normal_ids, ctx.config.detector.train_fraction, derive_seed(seed, "split")
    )
    train_set = set(train_ids)
    features, labels = detector_service.training_set(r for r in records if r.sample_id in train_set)
    detector = detector_service.train_logreg(features, labels, ctx.config.detector.logreg)
    written = {
        DETECTOR_FILE: ctx.store.write_json(DETECTOR_FILE, detector.to_dict()),
        SPLIT_FILE: ctx.store.write_json(SPLIT_FILE, {"train_ids": train_ids, "eval_ids": eval_ids}),
    }
    _record(ctx, "detect", seed, written)
    return detector


def _directions(records: Sequence[FeatureRecord]) -> dict[str, dict[str, Any]]:
    normal = {r.sample_id: r.features for r in records if r.sample_set is SampleSet.NORMAL}
    output = {}
    for attack in sorted({r.attack for r in records if r.sample_set is SampleSet.ADVERSARIAL}):
        rows = [r for r in records if r.attack == attack]
        adversarial = {r.sample_id: r.features for r in rows if r.sample_set is SampleSet.ADVERSARIAL}
        noisy = {r.sample_id: r.features for r in rows if r.sample_set is SampleSet.NOISY}
        ids = sorted(set(adversarial) & set(noisy) & set(normal))
        if ids:
            output[attack] = artifact_service.feature_directions(
                [normal[i] for i in ids], [noisy[i] for i in ids], [adversarial[i] for i in ids]
            ).to_dict()
    return output


def summarize(evaluations: dict[DetectorKind, DetectorEvaluation]) -> dict[str, Any]:
    """Per-attack and overall AUCs keyed ``auc_<kind>``, plus the combined-vs-best-single margin."""
    per_attack: dict[str, dict[str, float]] = {}
    overall: dict[str, float] = {}
    for kind, evaluation in evaluations.items():
        for attack, curve in evaluation.per_attack.items():
            per_attack.setdefault(attack, {})[f"auc_{kind}"] = curve.auc
        assert evaluation.overall is not None
        overall[f"auc_{kind}"] = evaluation.overall.auc
    best_single = max(overall[f"auc_{DetectorKind.UNCERTAINTY}"], overall[f"auc_{DetectorKind.DENSITY}"])
    combined = overall[f"auc_{DetectorKind.COMBINED}"]
    return {
        "per_attack": per_attack,
        "overall": overall,
        "combined_vs_best_single": {
            "combined": combined,
            "best_single": best_single,
            "margin": combined - best_single,
        },
    }


def run_evaluate(ctx: ExperimentContext) -> dict[str, Any]:
    """ROC curves for the three detectors on the evaluation split and the summary report."""
    seed = stage_seed(ctx, "evaluate")
    records = load_feature_records(ctx)
    if not ctx.store.exists(DETECTOR_FILE):
        raise MissingArtifactError(DETECTOR_FILE, "detect")
    detector = DetectorModel.from_dict(ctx.store.read_json(DETECTOR_FILE))
    if not ctx.store.exists(SPLIT_FILE):
        raise MissingArtifactError(SPLIT_FILE, "detect")
    eval_ids = set(ctx.store.read_json(SPLIT_FILE)["eval_ids"])
    eval_records = [r for r in records if r.sample_id in eval_ids]

    written = {}
    evaluations = {}
    for kind in DetectorKind:
        evaluation = detector_service.evaluate_detector(eval_records, kind, detector)
        evaluations[kind] = evaluation
        assert evaluation.overall is not None
        for scope, curve in [*evaluation.per_attack.items(), ("overall", evaluation.overall)]:
            name = roc_file(kind, scope)
            rows = zip(curve.thresholds, curve.fpr, curve.tpr, strict=True)
            written[name] = ctx.store.write_csv(name, ("threshold", "fpr", "tpr"), rows)

    summary = {
        "dataset": ctx.config.dataset.name,
        "eval_samples": len(eval_ids),
        **summarize(evaluations),
        "feature_directions": _directions(records),
    }
    written[SUMMARY_FILE] = ctx.store.write_json(SUMMARY_FILE, summary)
    _record(ctx, "evaluate", seed, written)
    logger.info("Overall combined AUC %.4f", summary["overall"][f"auc_{DetectorKind.COMBINED}"])
    return summary


def _undecided_rate(
    ctx: ExperimentContext, model: NetworkModel, cutoff: float, samples: Sequence[Any], *stream: int | str
) -> float:
    if not samples:
        return 0.0
    T = ctx.config.artifacts.mc_samples
    seed = stage_seed(ctx, "undecided")
    decisions = [
        detector_service.classify_with_undecided(model, cutoff, x, T, derive_seed(seed, *stream, index))
        for index, x in enumerate(samples)
    ]
    return float(np.mean([d == UNDECIDED for d in decisions]))


def run_undecided(ctx: ExperimentContext) -> dict[str, Any]:
    """Fit the uncertainty cutoff on validation FGSM samples and report undecided rates per set."""
    config = ctx.config
    seed = stage_seed(ctx, "undecided")
    model = load_model(ctx)
    splits = load_splits(ctx)
    if splits.validation is None:
        raise EmptyValidationError("dataset.validation_size is 0; no validation samples held out")
    cutoff = detector_service.uncertainty_threshold(
        model,
        splits.validation.images,
        splits.validation.labels,
        config.undecided.percentile,
        config.undecided.epsilon,
        config.artifacts.mc_samples,
        derive_seed(seed, "cutoff"),
    )

    attacks = load_attack_results(ctx) if any(ctx.store.exists(attack_file(n)) for n in config.attacks.names) else {}
    if attacks:
        ids = sorted({r.sample_id for results in attacks.values() for r in results if r.sample_id is not None})
    else:
        ids = correctly_classified(ctx, model, splits.test)
    rates: dict[str, Any] = {
        "normal": _undecided_rate(ctx, model, cutoff, [splits.test.images[i] for i in ids], "normal")
    }
    for name, results in attacks.items():
        rates[str(name)] = {
            "adversarial": _undecided_rate(ctx, model, cutoff, [r.x_adv for r in results], "adv", str(name)),
            "noisy": _undecided_rate(ctx, model, cutoff, [r.x_noisy for r in results], "noisy", str(name)),
        }
    report = {"cutoff": cutoff, "percentile": config.undecided.percentile, "undecided_rates": rates}
    _record(ctx, "undecided", seed, {UNDECIDED_FILE: ctx.store.write_json(UNDECIDED_FILE, report)})
    return report

