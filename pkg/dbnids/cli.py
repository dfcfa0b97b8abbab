"""
<Program Name>
  cli.py

<Purpose>
  Command line interface driving experiments from a configuration file:

    dbnids preprocess --config exp.ini   load, clean, split and fit the
                                          preprocessing; write splits and
                                          the pipeline artifact
    dbnids train --config exp.ini        balance the training split, train
                                          the configured model, write a
                                          model bundle and its history
    dbnids evaluate --config exp.ini     print and record the metrics of a
                                          bundle on a split
    dbnids sweep --config exp.ini        train once per balancing strategy
                                          and compare them on the test split
    dbnids gradcheck                     finite-difference gradient checks

  Results are printed to stdout; progress goes to the 'dbnids' logger.

  Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data or
  storage error, 4 state or format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from typing import Any

from dbnids import __version__, exceptions
from dbnids.balancing import STRATEGIES, apply_balance
from dbnids.checksum import digest_filename
from dbnids.config import ExperimentConfig, load_config
from dbnids.evaluation import (
    EvalReport,
    confusion,
    format_table,
    metrics,
    report_records,
)
from dbnids.formats import encode_records
from dbnids.gradcheck import run_gradcheck
from dbnids.models import (
    Classifier,
    DbnArchitecture,
    EpochRecord,
    ModelBundle,
    fine_tune,
    greedy_pretrain,
    mlp_train,
)
from dbnids.numerics import Rng
from dbnids.pipeline import (
    Dataset,
    LabelMap,
    PipelineArtifact,
    drop_correlated,
    drop_zero_variance,
    fit_pipeline,
    load_csvs,
    merge_labels,
    stratified_split,
)
from dbnids.storage import FilesystemBackend, StorageBackendInterface

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
ARTIFACT_FILE = "pipeline.artifact"
BUNDLE_FILE = "model.bundle"
HISTORY_FILE = "history.jsonl"
PREPROCESS_REPORT = "preprocess.jsonl"
SWEEP_REPORT = "sweep.jsonl"
GRADCHECK_REPORT = "gradcheck.jsonl"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STATE = 4

# Checked in order; other dbnids errors exit with EXIT_FAILURE.
EXIT_CODES: dict[type[exceptions.Error], int] = {
    exceptions.ConfigError: EXIT_CONFIG,
    exceptions.DataError: EXIT_DATA,
    exceptions.StorageError: EXIT_DATA,
    exceptions.DomainError: EXIT_DATA,
    exceptions.ShapeError: EXIT_DATA,
    exceptions.StateError: EXIT_STATE,
    exceptions.FormatError: EXIT_STATE,
}


def split_file(split: str) -> str:
    return f"{split}.split"


def report_file(split: str) -> str:
    return f"evaluate-{split}.jsonl"


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Log the wall time of a stage; prefix errors with the stage name.

    The error keeps its type so that it maps to the same exit code.
    """
    start = time.perf_counter()
    try:
        yield
    except exceptions.Error as e:
        raise type(e)(f"stage {name}: {e}") from e
    logger.info("stage %s finished in %.3fs", name, time.perf_counter() - start)


def _write_records(
    storage_backend: StorageBackendInterface,
    path: str,
    records: list[dict[str, Any]],
) -> None:
    storage_backend.put_bytes(encode_records(records), path)


def cmd_preprocess(
    config: ExperimentConfig, storage_backend: StorageBackendInterface | None = None
) -> dict[str, Dataset]:
    """
    <Purpose>
      Load the configured CSV files, merge labels, remove zero-variance and
      correlated features, split stratified, fit the preprocessing on the
      training split and apply it to all three splits.  Writes the
      transformed splits, the PipelineArtifact and a report of per-stage
      row and feature counts to the output directory.

    <Exceptions>
      Errors of any stage, with the stage name prefixed.

    <Returns>
      The transformed splits by name.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()
    if not config.data_paths:
        raise exceptions.ConfigError("[data] paths is empty")

    records: list[dict[str, Any]] = []

    def report(stage_name: str, ds: Dataset, **extra: Any) -> None:
        record = {
            "stage": stage_name,
            "rows": ds.n_rows,
            "features": ds.n_features,
            **extra,
        }
        records.append(record)
        print(f"{stage_name:<20} {ds.n_rows:>10} rows {ds.n_features:>5} features")

    with stage("load"):
        ds = load_csvs(
            config.data_paths,
            config.label_column,
            config.excluded_columns,
            storage_backend,
        )
        report("load", ds, invalid_rows=ds.invalid_rows)

    with stage("merge_labels"):
        if config.label_map == "cicids2017":
            ds = merge_labels(ds, LabelMap.cicids2017())
        report("merge_labels", ds, class_counts=ds.class_counts())
        for name, count in ds.class_counts().items():
            print(f"  {name:<18} {count:>10}")

    removed_zero_variance: list[str] = []
    removed_correlated: list[str] = []
    with stage("drop_zero_variance"):
        if config.pipeline.drop_zero_variance:
            ds, removed_zero_variance = drop_zero_variance(ds)
        report("drop_zero_variance", ds, removed=removed_zero_variance)

    with stage("drop_correlated"):
        threshold = config.pipeline.correlation_threshold
        if threshold is not None:
            ds, removed_correlated = drop_correlated(ds, threshold)
        report("drop_correlated", ds, removed=removed_correlated)

    rng = Rng(config.seed)
    with stage("split"):
        parts = stratified_split(
            ds, rng.child("split"), config.split, config.time_ordered_split
        )
        splits = dict(zip(SPLITS, parts))
        for name, part in splits.items():
            report(f"split:{name}", part, class_counts=part.class_counts())

    with stage("fit"):
        artifact = fit_pipeline(
            splits["train"],
            config.pipeline,
            removed_zero_variance,
            removed_correlated,
        )

    with stage("transform"):
        transformed = {name: artifact.apply(part) for name, part in splits.items()}
        report("transform", transformed["train"])

    with stage("write"):
        storage_backend.create_folder(config.output_dir)
        for name, part in transformed.items():
            storage_backend.put_bytes(
                part.to_bytes(), os.path.join(config.output_dir, split_file(name))
            )
        storage_backend.put_bytes(
            artifact.to_bytes(), os.path.join(config.output_dir, ARTIFACT_FILE)
        )
        _write_records(
            storage_backend,
            os.path.join(config.output_dir, PREPROCESS_REPORT),
            records,
        )

    return transformed


def load_preprocessed(
    output_dir: str, storage_backend: StorageBackendInterface
) -> tuple[dict[str, Dataset], PipelineArtifact]:
    """Read the splits and artifact written by ``cmd_preprocess``.

    Raises:
        StateError: the output directory or any of the files is missing;
            the message names every missing file.
    """
    expected = [*(split_file(name) for name in SPLITS), ARTIFACT_FILE]
    try:
        present = set(storage_backend.list_folder(output_dir))
    except exceptions.StorageError:
        present = set()
    missing = [name for name in expected if name not in present]
    if missing:
        raise exceptions.StateError(
            f"{', '.join(missing)} not found in {output_dir}, run preprocess first"
        )

    splits = {
        name: Dataset.from_bytes(
            storage_backend.read_bytes(os.path.join(output_dir, split_file(name)))
        )
        for name in SPLITS
    }
    artifact = PipelineArtifact.from_bytes(
        storage_backend.read_bytes(os.path.join(output_dir, ARTIFACT_FILE))
    )
    return splits, artifact


def evaluate_model(model: Classifier, ds: Dataset) -> EvalReport:
    predicted = model.predict(ds.features)
    return metrics(confusion(ds.labels, predicted, model.n_classes, ds.class_names))


def train_model(
    config: ExperimentConfig,
    train: Dataset,
    val: Dataset,
    artifact: PipelineArtifact,
    rng: Rng,
) -> tuple[ModelBundle, list[EpochRecord]]:
    """Balance 'train', train the configured model and bundle it.

    The model is narrowed to float32 precision before evaluation so that a
    reloaded bundle predicts exactly what the returned one does.
    """
    with stage("balance"):
        balanced = apply_balance(train, config.balance, rng.child("balance"))
    weighting = {
        "class_weights": balanced.class_weights,
        "sample_weights": balanced.sample_weights,
        "weighted_batches": config.balance.weighted_batches,
    }
    n_classes = len(train.class_names)

    model: Classifier
    if config.model == "dbn":
        input_size = config.dbn_input_size or train.n_features
        if input_size != train.n_features:
            raise exceptions.ConfigError(
                f"[dbn] input_size is {input_size} but the preprocessed data "
                f"has {train.n_features} features"
            )
        arch = DbnArchitecture((input_size, *config.dbn_hidden_sizes), n_classes)
        with stage("pretrain"):
            pretrained, errors = greedy_pretrain(
                arch, balanced.dataset.features, config.pretrain, rng.child("pretrain")
            )
        with stage("finetune"):
            model, history = fine_tune(
                pretrained,
                balanced.dataset,
                val,
                dataclasses.replace(config.finetune, **weighting),
                rng.child("finetune"),
            )
        train_config = {**config.to_dict(), "reconstruction_errors": errors}
    else:
        with stage("mlp"):
            model, history = mlp_train(
                balanced.dataset,
                val,
                dataclasses.replace(config.mlp, **weighting),
                rng.child("mlp"),
                config.mlp_hidden_sizes,
                n_classes,
            )
        train_config = config.to_dict()

    model = model.narrowed()
    report = evaluate_model(model, val)
    bundle = ModelBundle(
        model,
        artifact,
        train_config,
        {"val": report.to_dict()},
        [record.to_dict() for record in history],
    )
    return bundle, history


def cmd_train(
    config: ExperimentConfig, storage_backend: StorageBackendInterface | None = None
) -> ModelBundle:
    """Train the configured model on the preprocessed splits and write the
    bundle and its per-epoch history.

    Raises:
        StateError: the preprocessed splits are missing.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()
    splits, artifact = load_preprocessed(config.output_dir, storage_backend)

    rng = Rng(config.seed).child("train")
    bundle, history = train_model(
        config, splits["train"], splits["val"], artifact, rng
    )

    with stage("write"):
        bundle.save(os.path.join(config.output_dir, BUNDLE_FILE), storage_backend)
        _write_records(
            storage_backend,
            os.path.join(config.output_dir, HISTORY_FILE),
            [record.to_dict() for record in history],
        )

    print(f"Validation ({config.model}, balancing {config.balance.strategy}):")
    print(format_table(evaluate_model(bundle.model, splits["val"])))
    return bundle


def cmd_evaluate(
    bundle_path: str,
    split: str,
    output_dir: str,
    storage_backend: StorageBackendInterface | None = None,
) -> EvalReport:
    """Evaluate a saved bundle on a preprocessed split.

    Prints the confusion matrix and metrics and writes one record per class
    and aggregate to ``evaluate-<split>.jsonl``.

    Raises:
        FormatError: the bundle is corrupt or of an unsupported version.
        StateError: the split is missing.
        DataError: the split's classes differ from the bundle's.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()
    if split not in SPLITS:
        raise exceptions.ConfigError(f"Unknown split {split!r}")

    bundle = ModelBundle.load(bundle_path, storage_backend)
    path = os.path.join(output_dir, split_file(split))
    if not storage_backend.exists(path):
        raise exceptions.StateError(f"{path} not found, run preprocess first")
    ds = Dataset.from_bytes(storage_backend.read_bytes(path))
    if ds.class_names != bundle.pipeline.class_names:
        raise exceptions.DataError(
            f"Split classes {ds.class_names} differ from the bundle's "
            f"{bundle.pipeline.class_names}"
        )

    report = evaluate_model(bundle.model, ds)
    print(f"{split} ({bundle.model.KIND}):")
    print(format_table(report))
    _write_records(
        storage_backend,
        os.path.join(output_dir, report_file(split)),
        report_records(report, split=split, model=bundle.model.KIND),
    )
    return report


def cmd_sweep(
    config: ExperimentConfig,
    strategies: Sequence[str] = STRATEGIES,
    storage_backend: StorageBackendInterface | None = None,
) -> list[dict[str, Any]]:
    """
    <Purpose>
      Train one model per balancing strategy, all from the same seed, and
      compare their per-class precision, recall and F1 on the test split.
      Each strategy also records checksums of the validation and test
      splits it was given, which are identical across strategies.

    <Exceptions>
      dbnids.exceptions.StateError, if the preprocessed splits are missing.

      dbnids.exceptions.ConfigError, for an unknown strategy.

    <Returns>
      The comparison records, also written to sweep.jsonl.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown or not strategies:
        raise exceptions.ConfigError(f"Unknown balancing strategies {unknown}")

    splits, artifact = load_preprocessed(config.output_dir, storage_backend)
    split_checksums = {
        f"{name}_checksum": digest_filename(
            os.path.join(config.output_dir, split_file(name)), storage_backend
        ).hex()
        for name in ("val", "test")
    }
    records: list[dict[str, Any]] = []
    reports: dict[str, EvalReport] = {}
    for strategy in strategies:
        logger.info("sweep: strategy %s", strategy)
        strategy_config = config.replace(
            balance=dataclasses.replace(config.balance, strategy=strategy)
        )
        with stage(f"sweep:{strategy}"):
            bundle, _ = train_model(
                strategy_config,
                splits["train"],
                splits["val"],
                artifact,
                Rng(config.seed).child("train"),
            )
        report = evaluate_model(bundle.model, splits["test"])
        reports[strategy] = report
        records.extend(
            report_records(report, split="test", strategy=strategy, model=config.model)
        )
        records.append({"record": "splits", "strategy": strategy, **split_checksums})

    print(format_sweep(reports))
    _write_records(
        storage_backend, os.path.join(config.output_dir, SWEEP_REPORT), records
    )
    return records


def format_sweep(reports: dict[str, EvalReport]) -> str:
    """Per-class precision/recall/F1 grid, one column per strategy."""
    strategies = list(reports)
    width = max(12, *(len(s) + 2 for s in strategies))
    class_names = next(iter(reports.values())).confusion.class_names
    lines = []
    for metric in ("precision", "recall", "f1"):
        lines.append(metric.ljust(20) + "".join(s.rjust(width) for s in strategies))
        for i, name in enumerate(class_names):
            values = [getattr(reports[s].per_class[i], metric) for s in strategies]
            lines.append(
                f"  {name}".ljust(20) + "".join(f"{v:.4f}".rjust(width) for v in values)
            )
        macro = [reports[s].aggregates["macro"][metric] for s in strategies]
        lines.append(
            "  macro".ljust(20) + "".join(f"{v:.4f}".rjust(width) for v in macro)
        )
        lines.append("")
    return "\n".join(lines).rstrip()


def cmd_gradcheck(
    seed: int,
    output_dir: str | None = None,
    storage_backend: StorageBackendInterface | None = None,
) -> bool:
    """Run the finite-difference suites; return whether all passed."""
    results = run_gradcheck(seed)
    for result in results:
        status = "ok" if result.passed else "FAILED"
        print(
            f"{result.name:<16} max relative error {result.max_relative_error:.3e} "
            f"({result.n_parameters} parameters) {status}"
        )
    if output_dir is not None:
        if storage_backend is None:
            storage_backend = FilesystemBackend()
        storage_backend.create_folder(output_dir)
        _write_records(
            storage_backend,
            os.path.join(output_dir, GRADCHECK_REPORT),
            [result.to_dict() for result in results],
        )
    return all(result.passed for result in results)


def _seed(value: str) -> int:
    seed = int(value, 0)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"{value} is not an unsigned 64-bit int")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbnids",
        description="Deep Belief Network intrusion detection experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, help="override [experiment] seed")
    common.add_argument("--out", help="override [experiment] output_dir")
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log progress (-v) or debug detail (-vv)",
    )

    for name, help_text in (
        ("preprocess", "load, clean, split and fit the preprocessing"),
        ("train", "train the configured model on the preprocessed splits"),
        ("sweep", "compare balancing strategies on the test split"),
    ):
        sub = subparsers.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("--config", required=True, help="experiment INI file")
        if name == "sweep":
            sub.add_argument(
                "--strategies",
                default=",".join(STRATEGIES),
                help="comma separated balancing strategies",
            )

    evaluate = subparsers.add_parser(
        "evaluate", parents=[common], help="evaluate a model bundle on a split"
    )
    evaluate.add_argument("--config", help="experiment INI file")
    evaluate.add_argument("--bundle", help=f"bundle path (default <out>/{BUNDLE_FILE})")
    evaluate.add_argument("--split", choices=SPLITS, default="test")

    gradcheck = subparsers.add_parser(
        "gradcheck", parents=[common], help="finite-difference gradient checks"
    )
    gradcheck.add_argument("--config", help="experiment INI file (for the seed)")

    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.getLogger("dbnids").setLevel(level)


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig()
    if args.config is not None:
        config = load_config(args.config)
    return config.with_overrides(seed=args.seed, output_dir=args.out)


def run(args: argparse.Namespace) -> int:
    config = _experiment(args)
    if args.command == "preprocess":
        cmd_preprocess(config)
    elif args.command == "train":
        cmd_train(config)
    elif args.command == "evaluate":
        bundle = args.bundle or os.path.join(config.output_dir, BUNDLE_FILE)
        cmd_evaluate(bundle, args.split, config.output_dir)
    elif args.command == "sweep":
        strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
        cmd_sweep(config, strategies)
    elif args.command == "gradcheck":
        passed = cmd_gradcheck(config.seed, args.out)
        return EXIT_OK if passed else EXIT_FAILURE
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``dbnids`` command; returns the exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return run(args)
    except exceptions.Error as e:
        logger.error("%s: %s", type(e).__name__, e)
        for error_type, code in EXIT_CODES.items():
            if isinstance(e, error_type):
                return code
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
