"""
Experiment runner: load → preprocess → features → {ALL, PCA, GAFS} → learner → report.

    python -m eeg_gafs.cli validate data/configs/synthetic_smoke.json
    python -m eeg_gafs.cli run data/configs/synthetic_smoke.json --seed 3
    python -m eeg_gafs.cli report data/runs/synthetic-smoke_20240115_070000
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .artifacts import RunDirectory
from .config import Settings, load_settings
from .errors import ConfigurationError, ConfigValidationError, DataError, EegGafsError, StageError
from .experiment_config import DatasetConfig, ExperimentConfig, PreprocessConfig
from .features import build_matrix
from .ga import Mode, combine_fitness, model_performance, run as run_ga
from .ingest import ChannelSpec, Segment, load_csv, load_edf, load_many, segment, synthesize
from .learners import classification_report, cluster_evaluator_sweep, kmeans, pca_reduce
from .logging_config import setup_logging
from .models import FeatureMatrix, InstanceSet, LabeledData, Recording
from .preprocess import fir_bandpass, notch, resample, zscore
from .reports import report_tables, write_reports

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def exit_code_for(error: BaseException) -> int:
    """Map an error (or a stage error's cause) to the process exit code."""
    if isinstance(error, StageError):
        error = error.cause
    if isinstance(error, ConfigurationError):
        return EXIT_CONFIG
    if isinstance(error, DataError):
        return EXIT_DATA
    return EXIT_RUNTIME


def validate(config_path: Path) -> ExperimentConfig:
    """
    Parse and fully resolve an experiment config.

    Raises:
        ConfigValidationError: With every violation found
    """
    cfg = ExperimentConfig.from_file(config_path)
    logger.info(f"Config {config_path} is valid ({cfg.strategy}, {cfg.learner.mode.value})")
    return cfg


# --- stages ---------------------------------------------------------------

@dataclass
class LoadedRecording:
    """A continuous recording plus the labeled windows to cut from it once filtered."""
    recording: Recording
    segments: List[Segment] = field(default_factory=list)

    def instances(self) -> List[Recording]:
        return segment(self.recording, self.segments) if self.segments else [self.recording]


def _synthetic_seed(seed: int, *indices: int) -> int:
    return int(np.random.SeedSequence([seed, *indices]).generate_state(1)[0])


def _synthetic_recordings(dataset: DatasetConfig, seed: int) -> List[LoadedRecording]:
    syn = dataset.synthetic
    recordings = []
    for s in range(syn.subjects):
        subject = f"S{s + 1:03d}"
        if not dataset.keeps(subject):
            continue
        for c, (condition, components) in enumerate(syn.conditions.items()):
            spec = [ChannelSpec(label=ch, components=tuple(components), noise_std=syn.noise_std)
                    for ch in syn.channels]
            for r in range(syn.repeats):
                recordings.append(LoadedRecording(synthesize(
                    spec, syn.duration, syn.sampling_rate, seed=_synthetic_seed(seed, s, c, r),
                    condition=condition, subject=subject,
                )))
    return recordings


def _file_recordings(dataset: DatasetConfig, workers: int) -> List[LoadedRecording]:
    entries = [f for f in dataset.files if dataset.keeps(f.subject)]
    skipped = len(dataset.files) - len(entries)
    if skipped:
        logger.info(f"Skipping {skipped} file(s) of excluded subjects")
    if dataset.format == "edf":
        loaders = [lambda f=f: load_edf(Path(f.path), f.condition, f.subject) for f in entries]
    else:
        loaders = [lambda f=f: load_csv(Path(f.path), f.sampling_rate, f.condition, f.subject) for f in entries]

    return [
        LoadedRecording(rec, [Segment(**s) for s in entry.segments])
        for entry, rec in zip(entries, load_many(loaders, workers))
    ]


def load_dataset(cfg: ExperimentConfig, workers: int = 1) -> Union[List[LoadedRecording], FeatureMatrix]:
    """
    Continuous recordings with their segment lists, or the prepared matrix for format `matrix`.

    Segments are cut once here to check the instance set; the cut is
    repeated after filtering.
    """
    dataset = cfg.dataset
    if dataset.format == "matrix":
        matrix = FeatureMatrix.read_csv(Path(dataset.matrix_path))
        keep = np.array([dataset.keeps(r.subject) for r in matrix.row_meta])
        if not keep.all():
            logger.info(f"Dropping {int((~keep).sum())} row(s) of excluded subjects")
            matrix = FeatureMatrix(
                values=matrix.values[keep],
                column_meta=matrix.column_meta,
                row_meta=[r for r, k in zip(matrix.row_meta, keep) if k],
            )
        return matrix

    if dataset.format == "synthetic":
        loaded = _synthetic_recordings(dataset, cfg.seed)
    else:
        loaded = _file_recordings(dataset, workers)
    for item in loaded:
        if dataset.resample_rate is not None:
            item.recording = resample(item.recording, dataset.resample_rate)
        if dataset.channel_aliases:
            item.recording = item.recording.rename(dataset.channel_aliases)
        if dataset.channels is not None:
            item.recording = item.recording.pick(dataset.channels)
    instances = InstanceSet.from_recordings([rec for item in loaded for rec in item.instances()])
    logger.info(
        f"Loaded {len(instances)} instances from {len(loaded)} recording(s), {len(instances.channels)} channels at "
        f"{instances.sampling_rate:g} Hz, conditions {sorted(instances.conditions)}"
    )
    return loaded


def preprocess_dataset(loaded: Sequence[LoadedRecording], pre: PreprocessConfig) -> InstanceSet:
    """Filter and notch each continuous recording, cut its segments, then z-score every instance."""
    processed = []
    for item in loaded:
        rec = item.recording
        if pre.filter is not None:
            rec = fir_bandpass(rec, pre.filter)
            if pre.notch:
                rec = notch(rec, pre.filter)
        for instance in LoadedRecording(rec, item.segments).instances():
            processed.append(zscore(instance) if pre.zscore else instance)
    return InstanceSet.from_recordings(processed)


def benchmark_fitness(full: FeatureMatrix, evaluated: FeatureMatrix, cfg: ExperimentConfig) -> dict:
    """Configured fitness of a benchmark matrix relative to the full column count."""
    perf = model_performance(LabeledData.from_matrix(evaluated), cfg.ga, cfg.seed)
    value = combine_fitness(perf, evaluated.shape[1], full.shape[1], cfg.ga.fitness_family, cfg.ga.lam)
    logger.info(f"{cfg.strategy} benchmark {cfg.ga.fitness_family.value} fitness: {value:.4f} (perf {perf:.4f})")
    return {
        "strategy": cfg.strategy,
        "fitness_family": cfg.ga.fitness_family.value,
        "lambda": cfg.ga.lam,
        "performance": perf,
        "fitness": value,
        "n_selected": int(evaluated.shape[1]),
        "n_features": int(full.shape[1]),
    }


def _learner_report(run: RunDirectory, matrix: FeatureMatrix, cfg: ExperimentConfig) -> None:
    data = LabeledData.from_matrix(matrix)
    if cfg.learner.mode is Mode.SUPERVISED:
        metrics = classification_report(data, folds=cfg.learner.folds, seed=cfg.seed)
        run.write_json("classification_report.json", {**metrics.to_dict(), "n_selected": data.n_features})
        return

    result = kmeans(data.X, cfg.learner.k, seed=cfg.seed)
    sweep = cluster_evaluator_sweep(data.X, seed=cfg.seed, n_tasks=len(data.classes))
    logger.info(f"K-means k={cfg.learner.k}: avg silhouette {result.avg_silhouette:.4f}")
    run.write_json("clustering_report.json", {
        **result.to_dict(),
        "k": cfg.learner.k,
        "cost_history": list(result.cost_history),
        "sweep": sweep.to_dict(),
        "n_selected": data.n_features,
    })


def _write_features(run: RunDirectory, matrix: FeatureMatrix) -> None:
    matrix.to_csv(run.artifact("features.csv"))
    run.register("features.csv")
    run.register("features.json")


def run_experiment(cfg: ExperimentConfig, settings: Optional[Settings] = None) -> RunDirectory:
    """
    Run every stage and write the artifacts into a new run directory.

    Returns:
        The run directory (manifest status "complete")

    Raises:
        StageError: A stage failed; the manifest names it
    """
    settings = settings or load_settings()
    output_dir = cfg.output_dir or settings.output_dir
    run = RunDirectory.create(
        output_dir,
        cfg.name,
        config=cfg.to_dict(),
        seeds={"run": cfg.seed, "ga": cfg.seed, "cv": cfg.seed, "kmeans": cfg.seed, "synthetic": cfg.seed},
    )

    with run.stage("load") as info:
        loaded = load_dataset(cfg, settings.workers)
        if isinstance(loaded, FeatureMatrix):
            info["instances"] = loaded.shape[0]
            _write_features(run, loaded)
        else:
            info["recordings"] = len(loaded)
            info["instances"] = sum(len(item.segments) or 1 for item in loaded)

    if isinstance(loaded, FeatureMatrix):
        matrix = loaded
    else:
        with run.stage("preprocess"):
            instances = preprocess_dataset(loaded, cfg.preprocess)
        with run.stage("features") as info:
            matrix = build_matrix(
                instances, cfg.features.bands, cfg.features.welch, cfg.features.morlet, workers=settings.workers
            )
            info["columns"] = matrix.shape[1]
            _write_features(run, matrix)

    with run.stage("strategy") as info:
        if cfg.strategy == "GAFS":
            ga_cfg = replace(cfg.ga, workers=settings.workers)
            report = run_ga(LabeledData.from_matrix(matrix), ga_cfg)
            run.write_json("ga_report.json", {**report.to_dict(), "feature_names": matrix.columns})
            selected = matrix.select(report.final_chromosome)
            info.update({
                "generations": report.generations_run,
                "minutes": report.elapsed_minutes,
                "minutes_to_best": report.minutes_to_best,
                "stop_reason": report.stop_reason.value,
            })
        elif cfg.strategy == "PCA":
            selected = pca_reduce(matrix, cfg.pca_variance_threshold)
            selected.to_csv(run.artifact("pca_scores.csv"))
            run.register("pca_scores.csv")
            info["components"] = selected.shape[1]
        else:
            selected = matrix
        if cfg.strategy != "GAFS" and cfg.ga is not None:
            run.write_json("benchmark_fitness.json", benchmark_fitness(matrix, selected, cfg))
        run.write_text("selected_features.txt", "\n".join(selected.columns) + "\n")
        info["selected"] = selected.shape[1]

    with run.stage("learner"):
        _learner_report(run, selected, cfg)

    with run.stage("report"):
        write_reports(run, cfg.reports)

    run.finish("complete")
    logger.info(f"✓ Experiment {cfg.name} complete: {run.path}")
    return run


# --- commands -------------------------------------------------------------

def command_validate(args) -> int:
    try:
        cfg = validate(Path(args.config))
    except ConfigValidationError as e:
        print(f"\n✗ {len(e.violations)} violation(s) in {args.config}:")
        for violation in e.violations:
            print(f"  ✗ {violation}")
        return EXIT_CONFIG
    print(f"\n✓ {args.config} is valid")
    print(f"  name: {cfg.name}")
    print(f"  strategy: {cfg.strategy}")
    print(f"  learner: {cfg.learner.mode.value}")
    if cfg.ga is not None:
        print(f"  fitness: {cfg.ga.fitness_family.value}")
    return EXIT_OK


def command_run(args, settings: Settings) -> int:
    try:
        cfg = validate(Path(args.config)).with_overrides(seed=args.seed, max_minutes=args.max_minutes)
        run = run_experiment(cfg, settings)
    except ConfigValidationError as e:
        for violation in e.violations:
            logger.error(f"Config violation: {violation}")
        return EXIT_CONFIG
    except StageError as e:
        logger.error(f"Experiment aborted in stage '{e.stage}': {e.cause}")
        return exit_code_for(e)
    except EegGafsError as e:
        logger.error(f"Experiment failed: {e}")
        return exit_code_for(e)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_RUNTIME
    print(report_tables(run).to_text())
    return EXIT_OK


def command_report(args) -> int:
    try:
        tables = report_tables(Path(args.run_dir))
    except EegGafsError as e:
        logger.error(f"Cannot build report: {e}")
        return exit_code_for(e)
    print(tables.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eeg_gafs",
        description="GA wrapper feature selection experiments on EEG data",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="Run an experiment")
    run_cmd.add_argument("config", help="Experiment config (JSON)")
    run_cmd.add_argument("--seed", type=int, help="Override the config seed")
    run_cmd.add_argument("--max-minutes", type=float, help="Override the GA wall-clock budget")

    validate_cmd = commands.add_parser("validate", help="Check a config and list every violation")
    validate_cmd.add_argument("config", help="Experiment config (JSON)")

    report_cmd = commands.add_parser("report", help="Print the tables of a finished run")
    report_cmd.add_argument("run_dir", help="Run directory containing manifest.json")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point with argument parsing."""
    args = build_parser().parse_args(argv)

    try:
        settings = load_settings()
    except ConfigurationError as e:
        print(f"✗ {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    setup_logging(settings.log_dir, verbose=args.verbose)

    logger.info("=" * 60)
    logger.info(f"EEG GA feature selection: {args.command}")
    logger.info("=" * 60)

    if args.command == "validate":
        exit_code = command_validate(args)
    elif args.command == "report":
        exit_code = command_report(args)
    else:
        exit_code = command_run(args, settings)

    if exit_code == 0:
        logger.info(f"{args.command} completed successfully")
    else:
        logger.error(f"{args.command} failed (exit code {exit_code})")
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
