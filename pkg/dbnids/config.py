"""
<Program Name>
  config.py

<Purpose>
  Experiment configuration: a versioned INI file read with configparser.

  Every section and key is validated before any work starts.  Unknown
  sections or keys are errors, because a mistyped hyper-parameter would
  otherwise silently fall back to its default and invalidate a run.

    [experiment]
    format_version = 1
    seed = 0
    output_dir = out
    model = dbn

    [data]
    paths = flows-1.csv, flows-2.csv
    ...

  See configs/ for complete examples.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import os
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, TypeVar

from dbnids import exceptions
from dbnids.balancing import BalanceSpec
from dbnids.models import (
    DEFAULT_HIDDEN_SIZES,
    DEFAULT_LAYER_SIZES,
    OPTIMISER_FOR_NAME,
    FineTuneConfig,
    MlpTrainConfig,
)
from dbnids.pipeline import EXCLUDED_COLUMNS, PipelineOptions
from dbnids.rbm import CdConfig
from dbnids.storage import FilesystemBackend, StorageBackendInterface

logger = logging.getLogger(__name__)

CONFIG_FORMAT_VERSION = 1
MODELS = ("dbn", "mlp")
LABEL_MAPS = ("cicids2017", "none")

T = TypeVar("T")

# Known keys per section.
SCHEMA: dict[str, tuple[str, ...]] = {
    "experiment": ("format_version", "seed", "output_dir", "model"),
    "data": (
        "paths",
        "label_column",
        "label_map",
        "excluded_columns",
        "split",
        "time_ordered_split",
    ),
    "pipeline": (
        "drop_zero_variance",
        "correlation_threshold",
        "scaler",
        "n_quantiles",
        "pca",
        "pca_variance",
        "pca_components",
        "unit_range",
    ),
    "balance": (
        "strategy",
        "targets",
        "smote_k",
        "reference_class",
        "weighted_batches",
    ),
    "dbn": ("input_size", "hidden_sizes"),
    "pretrain": ("epochs", "learning_rate", "batch_size", "momentum", "gibbs_steps"),
    "finetune": (
        "epochs",
        "learning_rate",
        "batch_size",
        "optimiser",
        "momentum",
        "select_best",
    ),
    "mlp": (
        "hidden_sizes",
        "epochs",
        "learning_rate",
        "batch_size",
        "momentum",
        "optimiser",
        "select_best",
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment.

    Attributes:
        seed: Experiment seed; every random stream derives from it.
        output_dir: Where splits, artifacts, bundles and reports go.
        model: "dbn" or "mlp".
        data_paths: Flow-record CSV files.
        label_column: Label column name, None for the last column.
        label_map: "cicids2017" to merge labels into six categories, "none"
            to use raw labels.
        excluded_columns: Identifier columns never used as features.
        split: Train, validation and test fractions.
        time_ordered_split: Split each class by row order instead of
            shuffling.
        pipeline: Preprocessing options.
        balance: Training-split balancing.
        dbn_input_size: Expected DBN input width, None to infer it from the
            preprocessed data.
        dbn_hidden_sizes: DBN hidden layer sizes.
        pretrain: RBM pretraining hyper-parameters.
        finetune: DBN fine-tuning hyper-parameters.
        mlp_hidden_sizes: MLP hidden layer sizes.
        mlp: MLP training hyper-parameters.
    """

    seed: int = 0
    output_dir: str = "out"
    model: str = "dbn"
    data_paths: tuple[str, ...] = ()
    label_column: str | None = None
    label_map: str = "cicids2017"
    excluded_columns: tuple[str, ...] = EXCLUDED_COLUMNS
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    time_ordered_split: bool = False
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)
    balance: BalanceSpec = field(default_factory=BalanceSpec)
    dbn_input_size: int | None = None
    dbn_hidden_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES[1:]
    pretrain: CdConfig = field(default_factory=CdConfig)
    finetune: FineTuneConfig = field(default_factory=FineTuneConfig)
    mlp_hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES
    mlp: MlpTrainConfig = field(default_factory=MlpTrainConfig)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise exceptions.ConfigError(
                f"Unknown model {self.model!r}, expected one of {MODELS}"
            )
        if self.label_map not in LABEL_MAPS:
            raise exceptions.ConfigError(
                f"Unknown label map {self.label_map!r}, expected one of {LABEL_MAPS}"
            )
        if not 0 <= self.seed < 2**64:
            raise exceptions.ConfigError(
                f"Seed {self.seed} is not an unsigned 64-bit int"
            )

    def replace(self, **changes: Any) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def with_overrides(
        self, seed: int | None = None, output_dir: str | None = None
    ) -> ExperimentConfig:
        """Apply command line overrides."""
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if output_dir is not None:
            changes["output_dir"] = output_dir
        return self.replace(**changes)

    def to_dict(self) -> dict[str, Any]:
        """Echo of the configuration for reports (no file system paths)."""
        return {
            "seed": self.seed,
            "model": self.model,
            "label_map": self.label_map,
            "split": list(self.split),
            "time_ordered_split": self.time_ordered_split,
            "pipeline": dataclasses.asdict(self.pipeline),
            "balance": self.balance.to_dict(),
            "dbn_input_size": self.dbn_input_size,
            "dbn_hidden_sizes": list(self.dbn_hidden_sizes),
            "pretrain": dataclasses.asdict(self.pretrain),
            "finetune": self.finetune.to_dict(),
            "mlp_hidden_sizes": list(self.mlp_hidden_sizes),
            "mlp": self.mlp.to_dict(),
        }


def _convert(section: str, key: str, raw: str, convert: Callable[[str], T]) -> T:
    try:
        return convert(raw.strip())
    except (ValueError, TypeError) as e:
        raise exceptions.ConfigError(f"[{section}] {key} = {raw!r}: {e}")


def _boolean(raw: str) -> bool:
    states = configparser.ConfigParser.BOOLEAN_STATES
    if raw.lower() not in states:
        raise ValueError("not a boolean")
    return states[raw.lower()]


def _items(raw: str) -> list[str]:
    return [item.strip() for item in raw.replace("\n", ",").split(",") if item.strip()]


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(item) for item in _items(raw))


def _optional(convert: Callable[[str], T]) -> Callable[[str], T | None]:
    def parse(raw: str) -> T | None:
        if raw.lower() in ("", "none", "auto"):
            return None
        return convert(raw)

    return parse


def _split(raw: str) -> tuple[float, float, float]:
    fractions = tuple(float(item) for item in _items(raw))
    if len(fractions) != 3:  # noqa: PLR2004
        raise ValueError("expected three fractions")
    return fractions  # type: ignore[return-value]


def _targets(raw: str) -> dict[str, int]:
    targets = {}
    for item in _items(raw):
        name, _, count = item.rpartition(":")
        if not name:
            raise ValueError(f"expected <class>:<count>, got {item!r}")
        targets[name.strip()] = int(count)
    return targets


class _Section:
    """Typed access to one parsed section, remembering consumed keys."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.values = dict(parser[name]) if parser.has_section(name) else {}

    def get(self, key: str, convert: Callable[[str], T], default: T) -> T:
        if key not in self.values:
            return default
        return _convert(self.name, key, self.values[key], convert)


def parse_config(text: str, base_dir: str = "") -> ExperimentConfig:
    """
    <Purpose>
      Parse and validate the INI 'text' of an experiment configuration.
      Relative data paths are resolved against 'base_dir'.

    <Exceptions>
      dbnids.exceptions.ConfigError, if the text is not valid INI, has
      unknown sections or keys, the wrong format_version, or values that
      cannot be parsed or are out of range.

    <Returns>
      An ExperimentConfig.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise exceptions.ConfigError(f"Unreadable config: {e}")

    if parser.defaults():
        raise exceptions.ConfigError("The [DEFAULT] section is not supported")
    for section in parser.sections():
        if section not in SCHEMA:
            raise exceptions.ConfigError(f"Unknown config section [{section}]")
        unknown = set(parser[section]) - set(SCHEMA[section])
        if unknown:
            raise exceptions.ConfigError(
                f"Unknown keys in [{section}]: {', '.join(sorted(unknown))}"
            )

    experiment = _Section(parser, "experiment")
    version = experiment.get("format_version", _optional(int), None)
    if version != CONFIG_FORMAT_VERSION:
        raise exceptions.ConfigError(
            f"Config format_version must be {CONFIG_FORMAT_VERSION}, got {version}"
        )

    data = _Section(parser, "data")
    pipeline = _Section(parser, "pipeline")
    balance = _Section(parser, "balance")
    dbn = _Section(parser, "dbn")
    pretrain = _Section(parser, "pretrain")
    finetune = _Section(parser, "finetune")
    mlp = _Section(parser, "mlp")

    pipeline_defaults = PipelineOptions()
    balance_defaults = BalanceSpec()
    cd_defaults = CdConfig()
    finetune_defaults = FineTuneConfig()
    mlp_defaults = MlpTrainConfig()

    paths = tuple(
        os.path.join(base_dir, path) for path in data.get("paths", _items, [])
    )
    output_dir = experiment.get("output_dir", str, "out")

    # Constructors validate ranges and raise ConfigError themselves.
    config = ExperimentConfig(
        seed=experiment.get("seed", int, 0),
        output_dir=os.path.join(base_dir, output_dir),
        model=experiment.get("model", str, "dbn"),
        data_paths=paths,
        label_column=data.get("label_column", _optional(str), None),
        label_map=data.get("label_map", str, "cicids2017"),
        excluded_columns=tuple(
            data.get("excluded_columns", _items, list(EXCLUDED_COLUMNS))
        ),
        split=data.get("split", _split, (0.6, 0.2, 0.2)),
        time_ordered_split=data.get("time_ordered_split", _boolean, False),
        pipeline=PipelineOptions(
            drop_zero_variance=pipeline.get(
                "drop_zero_variance", _boolean, pipeline_defaults.drop_zero_variance
            ),
            correlation_threshold=pipeline.get(
                "correlation_threshold",
                _optional(float),
                pipeline_defaults.correlation_threshold,
            ),
            scaler=pipeline.get("scaler", str, pipeline_defaults.scaler),
            n_quantiles=pipeline.get("n_quantiles", int, pipeline_defaults.n_quantiles),
            pca=pipeline.get("pca", _boolean, pipeline_defaults.pca),
            pca_variance=pipeline.get(
                "pca_variance", float, pipeline_defaults.pca_variance
            ),
            pca_components=pipeline.get(
                "pca_components", _optional(int), pipeline_defaults.pca_components
            ),
            unit_range=pipeline.get(
                "unit_range", _boolean, pipeline_defaults.unit_range
            ),
        ),
        balance=BalanceSpec(
            strategy=balance.get("strategy", str, balance_defaults.strategy),
            targets=balance.get("targets", _targets, {}),
            smote_k=balance.get("smote_k", int, balance_defaults.smote_k),
            reference_class=balance.get(
                "reference_class", str, balance_defaults.reference_class
            ),
            weighted_batches=balance.get(
                "weighted_batches", _boolean, balance_defaults.weighted_batches
            ),
        ),
        dbn_input_size=dbn.get("input_size", _optional(int), None),
        dbn_hidden_sizes=dbn.get(
            "hidden_sizes", _int_list, DEFAULT_LAYER_SIZES[1:]
        ),
        pretrain=CdConfig(
            k=pretrain.get("gibbs_steps", int, cd_defaults.k),
            learning_rate=pretrain.get(
                "learning_rate", float, cd_defaults.learning_rate
            ),
            momentum=pretrain.get("momentum", float, cd_defaults.momentum),
            batch_size=pretrain.get("batch_size", int, cd_defaults.batch_size),
            epochs=pretrain.get("epochs", int, cd_defaults.epochs),
        ),
        finetune=FineTuneConfig(
            epochs=finetune.get("epochs", int, finetune_defaults.epochs),
            learning_rate=finetune.get(
                "learning_rate", float, finetune_defaults.learning_rate
            ),
            batch_size=finetune.get("batch_size", int, finetune_defaults.batch_size),
            optimiser=finetune.get("optimiser", str, finetune_defaults.optimiser),
            momentum=finetune.get("momentum", float, finetune_defaults.momentum),
            select_best=finetune.get(
                "select_best", _boolean, finetune_defaults.select_best
            ),
        ),
        mlp_hidden_sizes=mlp.get("hidden_sizes", _int_list, DEFAULT_HIDDEN_SIZES),
        mlp=MlpTrainConfig(
            epochs=mlp.get("epochs", int, mlp_defaults.epochs),
            learning_rate=mlp.get("learning_rate", float, mlp_defaults.learning_rate),
            batch_size=mlp.get("batch_size", int, mlp_defaults.batch_size),
            optimiser=mlp.get("optimiser", str, mlp_defaults.optimiser),
            momentum=mlp.get("momentum", float, mlp_defaults.momentum),
            select_best=mlp.get("select_best", _boolean, mlp_defaults.select_best),
        ),
    )

    for name, optimiser in (
        ("finetune", config.finetune.optimiser),
        ("mlp", config.mlp.optimiser),
    ):
        if optimiser not in OPTIMISER_FOR_NAME:
            raise exceptions.ConfigError(f"[{name}] unknown optimiser {optimiser!r}")
    if min(config.split) <= 0 or abs(sum(config.split) - 1.0) > 1e-9:  # noqa: PLR2004
        raise exceptions.ConfigError(
            f"[data] split {config.split} must be positive and sum to 1"
        )
    if not (config.dbn_hidden_sizes and min(config.dbn_hidden_sizes) >= 1):
        raise exceptions.ConfigError("[dbn] hidden_sizes must be positive")
    if config.mlp_hidden_sizes and min(config.mlp_hidden_sizes) < 1:
        raise exceptions.ConfigError("[mlp] hidden_sizes must be positive")
    return config


def load_config(
    path: str, storage_backend: StorageBackendInterface | None = None
) -> ExperimentConfig:
    """Read and validate the configuration file at 'path'.

    Relative data paths and the output directory are resolved against the
    directory of 'path'.

    Raises:
        StorageError: the file cannot be read.
        ConfigError: the configuration is invalid.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()
    raw = storage_backend.read_bytes(path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise exceptions.ConfigError(f"{path} is not UTF-8: {e}")
    config = parse_config(text, os.path.dirname(path))
    logger.debug("Loaded config %s: %s", path, config.to_dict())
    return config
