"""
<Program Name>
  pipeline.py

<Purpose>
  Flow-record ingestion and preprocessing: CSV loading, label merging,
  feature removal, stratified splitting and the fitted transforms (quantile
  transform, robust scaler, PCA, unit-range scaling) bundled into a
  persistable PipelineArtifact.

  Every fit function looks only at the rows it is given; the CLI passes the
  training split, so validation and test rows never influence an artifact.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from dbnids import exceptions
from dbnids.formats import decode_container, encode_container
from dbnids.numerics import Labels, Matrix, Rng
from dbnids.storage import FilesystemBackend, StorageBackendInterface

logger = logging.getLogger(__name__)

# Row order of the published confusion matrices; every report uses it.
DEFAULT_CLASS_NAMES = (
    "Benign",
    "Botnet",
    "Brute Force",
    "DoS/DDoS",
    "PortScan",
    "Web Attack",
)

# Host identifiers and timestamps say nothing about flow behaviour and are
# never used as features.
EXCLUDED_COLUMNS = (
    "Flow ID",
    "Source IP",
    "Src IP",
    "Source Port",
    "Src Port",
    "Destination IP",
    "Dst IP",
    "Destination Port",
    "Dst Port",
    "Timestamp",
)

DATASET_KIND = "dataset"
ARTIFACT_KIND = "pipeline-artifact"
ARTIFACT_VERSION = 1
SCALERS = ("quantile", "robust", "none")


@dataclass(eq=False)
class Dataset:
    """Labelled flow features.

    Attributes:
        features: ``rows x features`` matrix.
        labels: Class index of each row.
        feature_names: Unique column names, in column order.
        class_names: Names indexed by label.
        invalid_rows: Rows dropped at load time for NaN/Inf/unparseable
            values.

    Raises:
        DataError: inconsistent rows, labels or names.
    """

    features: Matrix
    labels: Labels
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]
    invalid_rows: int = 0

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        self.class_names = tuple(self.class_names)

        if self.features.ndim != 2:  # noqa: PLR2004
            raise exceptions.DataError("Dataset features must be a matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise exceptions.DataError(
                f"{self.features.shape[0]} feature rows but "
                f"{self.labels.shape[0]} labels"
            )
        if self.features.shape[1] != len(self.feature_names):
            raise exceptions.DataError(
                f"{self.features.shape[1]} feature columns but "
                f"{len(self.feature_names)} names"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise exceptions.DataError("Feature names must be unique")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= len(self.class_names)
        ):
            raise exceptions.DataError(
                f"Labels must lie in [0, {len(self.class_names)})"
            )

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels, minlength=len(self.class_names))
        return {name: int(count) for name, count in zip(self.class_names, counts)}

    def subset(self, indices: Sequence[int] | np.ndarray) -> Dataset:
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.feature_names,
            self.class_names,
        )

    def with_features(self, features: Matrix, feature_names: Sequence[str]) -> Dataset:
        return Dataset(features, self.labels, tuple(feature_names), self.class_names)

    def to_bytes(self) -> bytes:
        return encode_container(
            DATASET_KIND,
            {
                "feature_names": list(self.feature_names),
                "class_names": list(self.class_names),
            },
            {"features": self.features, "labels": self.labels},
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Dataset:
        metadata, arrays = decode_container(data, DATASET_KIND)
        return cls(
            arrays["features"],
            arrays["labels"],
            tuple(metadata["feature_names"]),
            tuple(metadata["class_names"]),
        )


def load_csv(
    path: str,
    label_column: str | None = None,
    excluded_columns: Iterable[str] = EXCLUDED_COLUMNS,
    storage_backend: StorageBackendInterface | None = None,
) -> Dataset:
    """
    <Purpose>
      Read one flow-record CSV file.  Column names are stripped of
      surrounding whitespace; the label is the last column unless
      'label_column' names another.  Identifier columns in
      'excluded_columns' are dropped.  Rows holding NaN, Inf or unparseable
      numbers are dropped and counted in ``Dataset.invalid_rows``.  Class
      names are the sorted raw label strings.

    <Exceptions>
      dbnids.exceptions.StorageError, if the file cannot be opened.

      dbnids.exceptions.DataError, if the file is empty, the label column is
      missing or no valid row remains.

    <Returns>
      A Dataset with raw labels.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()

    with storage_backend.get(path) as file_object:
        try:
            frame = pd.read_csv(
                file_object,
                skipinitialspace=True,
                encoding="utf-8",
                encoding_errors="replace",
                low_memory=False,
            )
        except pd.errors.EmptyDataError:
            raise exceptions.DataError(f"{path} is empty")

    frame.columns = [str(name).strip() for name in frame.columns]
    if label_column is None:
        label_column = frame.columns[-1]
    if label_column not in frame.columns:
        raise exceptions.DataError(f"{path} has no label column {label_column!r}")

    excluded = set(excluded_columns) | {label_column}
    feature_names = [name for name in frame.columns if name not in excluded]
    numeric = frame[feature_names].apply(pd.to_numeric, errors="coerce")
    features = numeric.to_numpy(dtype=np.float64)
    raw_labels = frame[label_column].astype(str).str.strip().to_numpy()

    valid = np.all(np.isfinite(features), axis=1)
    invalid_rows = int(np.count_nonzero(~valid))
    if invalid_rows:
        logger.info("%s: dropped %d rows with invalid numbers", path, invalid_rows)
    if not np.any(valid):
        raise exceptions.DataError(f"{path} holds no valid rows")

    class_names, labels = np.unique(raw_labels[valid], return_inverse=True)
    return Dataset(
        features[valid],
        labels.ravel(),
        tuple(feature_names),
        tuple(str(name) for name in class_names),
        invalid_rows=invalid_rows,
    )


def load_csvs(
    paths: Sequence[str],
    label_column: str | None = None,
    excluded_columns: Iterable[str] = EXCLUDED_COLUMNS,
    storage_backend: StorageBackendInterface | None = None,
) -> Dataset:
    """Load several CSV files with identical columns into one Dataset.

    Raises:
        DataError: no paths, or the files disagree on their feature columns.
    """
    if not paths:
        raise exceptions.DataError("No input files given")

    excluded_columns = tuple(excluded_columns)
    parts = [
        load_csv(path, label_column, excluded_columns, storage_backend)
        for path in paths
    ]
    feature_names = parts[0].feature_names
    for path, part in zip(paths, parts):
        if part.feature_names != feature_names:
            raise exceptions.DataError(f"{path} has different feature columns")

    class_names = tuple(sorted({name for part in parts for name in part.class_names}))
    index = {name: i for i, name in enumerate(class_names)}
    labels = [
        np.array([index[name] for name in part.class_names], dtype=np.int64)[
            part.labels
        ]
        for part in parts
    ]
    return Dataset(
        np.concatenate([part.features for part in parts]),
        np.concatenate(labels),
        feature_names,
        class_names,
        invalid_rows=sum(part.invalid_rows for part in parts),
    )


def normalise_label(raw: str) -> str:
    """Lower-case 'raw' and collapse every non-alphanumeric run to a space.

    CICIDS2017 writes "Web Attack – XSS" with a mis-encoded dash in some
    releases; both spellings normalise to "web attack xss".
    """
    return re.sub(r"[^0-9a-z]+", " ", raw.lower()).strip()


@dataclass(frozen=True)
class LabelMap:
    """Mapping from raw labels to merged categories.

    Attributes:
        mapping: Raw label -> category name.
        dropped: Raw labels whose rows are removed.
        classes: Category names in report order.

    Raises:
        ConfigError: a mapping target is not one of 'classes'.
    """

    mapping: dict[str, str]
    dropped: frozenset[str] = frozenset()
    classes: tuple[str, ...] = DEFAULT_CLASS_NAMES
    _lookup: dict[str, str] = field(init=False, repr=False, compare=False)
    _drop_lookup: frozenset[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        unknown = set(self.mapping.values()) - set(self.classes)
        if unknown:
            raise exceptions.ConfigError(
                f"Label map targets {sorted(unknown)} are not classes"
            )
        object.__setattr__(
            self,
            "_lookup",
            {normalise_label(raw): target for raw, target in self.mapping.items()},
        )
        object.__setattr__(
            self,
            "_drop_lookup",
            frozenset(normalise_label(raw) for raw in self.dropped),
        )

    def resolve(self, raw: str) -> str | None:
        """Return the category of 'raw', or None if its rows are dropped.

        Raises:
            DataError: 'raw' is neither mapped nor dropped.
        """
        key = normalise_label(raw)
        if key in self._drop_lookup:
            return None
        if key not in self._lookup:
            raise exceptions.DataError(f"Unknown raw label {raw!r}")
        return self._lookup[key]

    @classmethod
    def cicids2017(cls) -> LabelMap:
        """The CICIDS2017 label merge into six categories."""
        mapping = {
            "BENIGN": "Benign",
            "Heartbleed": "DoS/DDoS",
            "DDoS": "DoS/DDoS",
            "DoS Hulk": "DoS/DDoS",
            "DoS GoldenEye": "DoS/DDoS",
            "DoS slowloris": "DoS/DDoS",
            "DoS Slowhttptest": "DoS/DDoS",
            "PortScan": "PortScan",
            "FTP-Patator": "Brute Force",
            "SSH-Patator": "Brute Force",
            "Web Attack – Brute Force": "Web Attack",
            "Web Attack – XSS": "Web Attack",
            "Web Attack – Sql Injection": "Web Attack",
            "Bot": "Botnet",
        }
        return cls(mapping, frozenset({"Infiltration"}))


def merge_labels(ds: Dataset, label_map: LabelMap) -> Dataset:
    """Relabel 'ds' into the categories of 'label_map', dropping rows whose
    raw label is on the drop list.

    Raises:
        DataError: a raw label is unknown to the map (named in the message).
    """
    category_index = {name: i for i, name in enumerate(label_map.classes)}
    translation = np.full(len(ds.class_names), -1, dtype=np.int64)
    for raw_index, raw in enumerate(ds.class_names):
        category = label_map.resolve(raw)
        if category is not None:
            translation[raw_index] = category_index[category]

    labels = translation[ds.labels]
    keep = labels >= 0
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        logger.info("Removed %d rows with dropped labels", dropped)

    merged = Dataset(
        ds.features[keep],
        labels[keep],
        ds.feature_names,
        label_map.classes,
        invalid_rows=ds.invalid_rows,
    )
    logger.info("Class counts after merging: %s", merged.class_counts())
    return merged


def _drop_columns(ds: Dataset, removed: list[int]) -> tuple[Dataset, list[str]]:
    keep = [i for i in range(ds.n_features) if i not in set(removed)]
    names = [ds.feature_names[i] for i in removed]
    return (
        ds.with_features(ds.features[:, keep], [ds.feature_names[i] for i in keep]),
        names,
    )


def drop_zero_variance(ds: Dataset) -> tuple[Dataset, list[str]]:
    """Remove features whose values are all identical (variance exactly 0).

    Raises:
        DataError: 'ds' has no rows.
    """
    if ds.n_rows == 0:
        raise exceptions.DataError("Cannot assess variance of an empty dataset")
    constant = np.all(ds.features == ds.features[0], axis=0)
    result, removed = _drop_columns(ds, [int(i) for i in np.flatnonzero(constant)])
    logger.info("Removed %d zero-variance features: %s", len(removed), removed)
    return result, removed


def drop_correlated(ds: Dataset, threshold: float = 0.9) -> tuple[Dataset, list[str]]:
    """Greedily remove features highly correlated with an earlier kept one.

    Features are scanned in column order; a feature is removed when its
    absolute Pearson correlation with any already kept feature is at least
    'threshold'.

    Raises:
        ConfigError: 'threshold' outside (0, 1].
    """
    if not 0.0 < threshold <= 1.0:
        raise exceptions.ConfigError(
            f"Correlation threshold must lie in (0, 1], got {threshold}"
        )
    if ds.n_rows < 2 or ds.n_features < 2:  # noqa: PLR2004
        return ds, []

    with np.errstate(invalid="ignore", divide="ignore"):
        correlation = np.abs(np.corrcoef(ds.features, rowvar=False))
    correlation = np.nan_to_num(correlation, nan=0.0)

    kept: list[int] = []
    removed: list[int] = []
    for j in range(ds.n_features):
        if kept and np.max(correlation[j, kept]) >= threshold:
            removed.append(j)
        else:
            kept.append(j)

    result, names = _drop_columns(ds, removed)
    logger.info("Removed %d correlated features: %s", len(names), names)
    return result, names


def _split_sizes(n: int, fractions: tuple[float, float, float]) -> tuple[int, int]:
    n_val = max(1, int(round(n * fractions[1])))
    n_test = max(1, int(round(n * fractions[2])))
    return n_val, n_test


def stratified_split(
    ds: Dataset,
    rng: Rng,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    time_ordered: bool = False,
) -> tuple[Dataset, Dataset, Dataset]:
    """Partition 'ds' into train, validation and test sets per class.

    Each class is shuffled with ``rng.child("class-<name>")`` (or kept in row
    order when 'time_ordered') and cut by 'fractions'; validation and test
    receive at least one row of every class.  Rows keep their original
    relative order inside each split.

    Raises:
        ConfigError: fractions not positive or not summing to 1.
        DataError: a present class has fewer than 3 rows.
    """
    if len(fractions) != 3 or min(fractions) <= 0:  # noqa: PLR2004
        raise exceptions.ConfigError(f"Invalid split fractions {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:  # noqa: PLR2004
        raise exceptions.ConfigError(f"Split fractions {fractions} do not sum to 1")

    parts: tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]] = ([], [], [])
    for label, name in enumerate(ds.class_names):
        members = np.flatnonzero(ds.labels == label)
        if members.size == 0:
            continue
        if members.size < 3:  # noqa: PLR2004
            raise exceptions.DataError(
                f"Class {name!r} has {members.size} rows, a split needs at least 3"
            )
        if not time_ordered:
            members = members[rng.child(f"class-{name}").permutation(members.size)]
        n_val, n_test = _split_sizes(members.size, fractions)
        n_train = members.size - n_val - n_test
        parts[0].append(members[:n_train])
        parts[1].append(members[n_train : n_train + n_val])
        parts[2].append(members[n_train + n_val :])

    train, val, test = (
        ds.subset(np.sort(np.concatenate(part)) if part else np.empty(0, np.int64))
        for part in parts
    )
    logger.info(
        "Stratified split: %d train, %d validation, %d test rows",
        train.n_rows,
        val.n_rows,
        test.n_rows,
    )
    return train, val, test


def _check_columns(features: Matrix, expected: int, name: str) -> Matrix:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != expected:  # noqa: PLR2004
        raise exceptions.ShapeError(
            f"{name} was fitted on {expected} features, got shape {features.shape}"
        )
    return features


@dataclass(frozen=True, eq=False)
class QuantileTables:
    """Per-feature quantiles at evenly spaced reference probabilities."""

    references: Matrix
    quantiles: Matrix


def quantile_fit(features: Matrix, n_quantiles: int = 1000) -> QuantileTables:
    """Estimate each feature's empirical CDF at ``n_quantiles`` points.

    The number of points is capped at the number of rows.

    Raises:
        ConfigError: 'n_quantiles' < 2.
        DataError: no rows.
    """
    if n_quantiles < 2:  # noqa: PLR2004
        raise exceptions.ConfigError(f"n_quantiles must be >= 2, got {n_quantiles}")
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise exceptions.DataError("Cannot fit quantiles on zero rows")

    references = np.linspace(0.0, 1.0, min(n_quantiles, features.shape[0]))
    quantiles = np.percentile(features, references * 100.0, axis=0)
    # percentile interpolation can produce tiny inversions on ties
    quantiles = np.maximum.accumulate(quantiles, axis=0)
    return QuantileTables(references, quantiles)


def quantile_apply(tables: QuantileTables | None, features: Matrix) -> Matrix:
    """Map features through their fitted CDF onto [0, 1].

    Values between stored quantiles are interpolated linearly (averaging the
    ascending and descending interpolation so runs of equal quantiles map to
    their midpoint); values at or below the lowest quantile map to 0, at or
    above the highest to 1.  A constant feature therefore maps to 0.

    Raises:
        StateError: 'tables' is None (nothing fitted).
        ShapeError: feature count differs from the fit.
    """
    if tables is None:
        raise exceptions.StateError("quantile_apply called before quantile_fit")
    features = _check_columns(features, tables.quantiles.shape[1], "Quantile transform")

    references = tables.references
    out = np.empty_like(features)
    for j in range(features.shape[1]):
        column = features[:, j]
        quantiles = tables.quantiles[:, j]
        values = 0.5 * (
            np.interp(column, quantiles, references)
            - np.interp(-column, -quantiles[::-1], -references[::-1])
        )
        values[column >= quantiles[-1]] = 1.0
        values[column <= quantiles[0]] = 0.0
        out[:, j] = values
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class RobustScale:
    center: Matrix
    scale: Matrix


def robust_scale_fit(features: Matrix) -> RobustScale:
    """Median and interquartile range per feature; a zero IQR becomes 1.

    Raises:
        DataError: no rows.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise exceptions.DataError("Cannot fit a robust scaler on zero rows")
    q1, median, q3 = np.percentile(features, [25.0, 50.0, 75.0], axis=0)
    iqr = q3 - q1
    return RobustScale(median, np.where(iqr == 0.0, 1.0, iqr))


def robust_scale_apply(scale: RobustScale | None, features: Matrix) -> Matrix:
    """``(x - median) / IQR`` per feature.

    Raises:
        StateError: 'scale' is None.
    """
    if scale is None:
        raise exceptions.StateError("robust_scale_apply called before fitting")
    features = _check_columns(features, scale.center.shape[0], "Robust scaler")
    return (features - scale.center) / scale.scale


@dataclass(frozen=True, eq=False)
class PcaBasis:
    """Principal axes of the training features.

    Attributes:
        mean: Training mean per feature.
        components: ``features x kept`` orthonormal columns, by decreasing
            variance.
        explained_variance: Variance along each kept component.
        explained_variance_ratio: Fraction of the total variance per kept
            component.
    """

    mean: Matrix
    components: Matrix
    explained_variance: Matrix
    explained_variance_ratio: Matrix

    @property
    def n_components(self) -> int:
        return int(self.components.shape[1])


def pca_fit(
    features: Matrix,
    variance_target: float = 0.99,
    n_components: int | None = None,
) -> PcaBasis:
    """
    <Purpose>
      Eigendecompose the covariance of the centred training features and
      keep the smallest number of components whose cumulative explained
      variance ratio reaches 'variance_target' (or exactly 'n_components'
      when given).  Each component's sign is fixed so that its largest
      absolute loading is positive.

    <Exceptions>
      dbnids.exceptions.ConfigError, if 'variance_target' is outside (0, 1]
      or 'n_components' is outside [1, features].

      dbnids.exceptions.DataError, if fewer than 2 rows are given.

    <Returns>
      A PcaBasis.
    """
    if not 0.0 < variance_target <= 1.0:
        raise exceptions.ConfigError(
            f"PCA variance target must lie in (0, 1], got {variance_target}"
        )
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:  # noqa: PLR2004
        raise exceptions.DataError("PCA needs at least 2 rows")

    mean = features.mean(axis=0)
    centred = features - mean
    covariance = centred.T @ centred / (features.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(eigenvectors.shape[1])])
    eigenvectors = eigenvectors * np.where(signs == 0, 1.0, signs)

    total = eigenvalues.sum()
    ratios = eigenvalues / total if total > 0 else np.zeros_like(eigenvalues)

    if n_components is None:
        cumulative = np.cumsum(ratios)
        reached = np.flatnonzero(cumulative >= variance_target - 1e-12)
        k = int(reached[0]) + 1 if reached.size else len(ratios)
    elif 1 <= n_components <= len(ratios):
        k = n_components
    else:
        raise exceptions.ConfigError(
            f"n_components must lie in [1, {len(ratios)}], got {n_components}"
        )

    logger.info(
        "PCA keeps %d of %d components (%.4f of the variance)",
        k,
        len(ratios),
        float(ratios[:k].sum()),
    )
    return PcaBasis(mean, eigenvectors[:, :k], eigenvalues[:k], ratios[:k])


def pca_apply(basis: PcaBasis | None, features: Matrix) -> Matrix:
    """Project ``(x - mean)`` onto the kept components.

    Raises:
        StateError: 'basis' is None.
    """
    if basis is None:
        raise exceptions.StateError("pca_apply called before pca_fit")
    features = _check_columns(features, basis.mean.shape[0], "PCA")
    return (features - basis.mean) @ basis.components


@dataclass(frozen=True, eq=False)
class UnitRange:
    minimum: Matrix
    span: Matrix


def unit_range_fit(features: Matrix) -> UnitRange:
    """Training minimum and range per feature (a zero range becomes 1)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise exceptions.DataError("Cannot fit a unit range on zero rows")
    minimum = features.min(axis=0)
    span = features.max(axis=0) - minimum
    return UnitRange(minimum, np.where(span == 0.0, 1.0, span))


def unit_range_apply(unit_range: UnitRange | None, features: Matrix) -> Matrix:
    """Min-max scale onto [0, 1], clipping values outside the fitted range."""
    if unit_range is None:
        raise exceptions.StateError("unit_range_apply called before fitting")
    features = _check_columns(features, unit_range.minimum.shape[0], "Unit range")
    return np.clip((features - unit_range.minimum) / unit_range.span, 0.0, 1.0)


@dataclass(frozen=True)
class PipelineOptions:
    """Preprocessing choices; a None threshold skips correlation removal."""

    drop_zero_variance: bool = True
    correlation_threshold: float | None = 0.9
    scaler: str = "quantile"
    n_quantiles: int = 1000
    pca: bool = True
    pca_variance: float = 0.99
    pca_components: int | None = None
    unit_range: bool = True

    def __post_init__(self) -> None:
        if self.scaler not in SCALERS:
            raise exceptions.ConfigError(
                f"Unknown scaler {self.scaler!r}, expected one of {SCALERS}"
            )
        threshold = self.correlation_threshold
        if threshold is not None and not 0.0 < threshold <= 1.0:
            raise exceptions.ConfigError(
                f"Correlation threshold must lie in (0, 1], got {threshold}"
            )
        if self.n_quantiles < 2:  # noqa: PLR2004
            raise exceptions.ConfigError(
                f"n_quantiles must be >= 2, got {self.n_quantiles}"
            )
        if not 0.0 < self.pca_variance <= 1.0:
            raise exceptions.ConfigError(
                f"PCA variance target must lie in (0, 1], got {self.pca_variance}"
            )
        if self.pca_components is not None and self.pca_components < 1:
            raise exceptions.ConfigError(
                f"pca_components must be >= 1, got {self.pca_components}"
            )


@dataclass(eq=False)
class PipelineArtifact:
    """Fitted, persistable preprocessing state.

    Attributes:
        kept_columns: Raw feature names surviving removal, in order.
        removed_zero_variance: Names removed for zero variance.
        removed_correlated: Names removed for correlation.
        class_names: Class order of the data the pipeline was fitted on.
        scaler: One of ``SCALERS``.
        quantile, robust, pca, unit_range: Fitted stages, None if unused.
        fitted_rows: Number of training rows the stages were fitted on.
    """

    kept_columns: tuple[str, ...]
    removed_zero_variance: tuple[str, ...]
    removed_correlated: tuple[str, ...]
    class_names: tuple[str, ...]
    scaler: str
    quantile: QuantileTables | None = None
    robust: RobustScale | None = None
    pca: PcaBasis | None = None
    unit_range: UnitRange | None = None
    fitted_rows: int = 0

    @property
    def output_names(self) -> tuple[str, ...]:
        if self.pca is not None:
            return tuple(f"pc{i + 1}" for i in range(self.pca.n_components))
        return self.kept_columns

    def transform(self, features: Matrix) -> Matrix:
        """Run the fitted stages on features restricted to 'kept_columns'."""
        if self.scaler == "quantile":
            features = quantile_apply(self.quantile, features)
        elif self.scaler == "robust":
            features = robust_scale_apply(self.robust, features)
        if self.pca is not None:
            features = pca_apply(self.pca, features)
        if self.unit_range is not None:
            features = unit_range_apply(self.unit_range, features)
        return np.asarray(features, dtype=np.float64)

    def apply(self, ds: Dataset) -> Dataset:
        """Select the kept columns of 'ds' by name and transform them.

        Raises:
            DataError: a kept column is missing from 'ds'.
        """
        index = {name: i for i, name in enumerate(ds.feature_names)}
        missing = [name for name in self.kept_columns if name not in index]
        if missing:
            raise exceptions.DataError(f"Dataset lacks pipeline columns {missing}")
        columns = [index[name] for name in self.kept_columns]
        return ds.with_features(
            self.transform(ds.features[:, columns]), self.output_names
        )

    def metadata(self) -> dict[str, Any]:
        return {
            "artifact_version": ARTIFACT_VERSION,
            "kept_columns": list(self.kept_columns),
            "removed_zero_variance": list(self.removed_zero_variance),
            "removed_correlated": list(self.removed_correlated),
            "class_names": list(self.class_names),
            "scaler": self.scaler,
            "fitted_rows": self.fitted_rows,
            "stages": sorted(
                name
                for name, stage in (
                    ("quantile", self.quantile),
                    ("robust", self.robust),
                    ("pca", self.pca),
                    ("unit_range", self.unit_range),
                )
                if stage is not None
            ),
        }

    def arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        if self.quantile is not None:
            arrays["quantile/references"] = self.quantile.references
            arrays["quantile/quantiles"] = self.quantile.quantiles
        if self.robust is not None:
            arrays["robust/center"] = self.robust.center
            arrays["robust/scale"] = self.robust.scale
        if self.pca is not None:
            arrays["pca/mean"] = self.pca.mean
            arrays["pca/components"] = self.pca.components
            arrays["pca/explained_variance"] = self.pca.explained_variance
            arrays["pca/explained_variance_ratio"] = self.pca.explained_variance_ratio
        if self.unit_range is not None:
            arrays["unit_range/minimum"] = self.unit_range.minimum
            arrays["unit_range/span"] = self.unit_range.span
        return {prefix + name: array for name, array in arrays.items()}

    @classmethod
    def from_parts(
        cls, metadata: dict[str, Any], arrays: dict[str, np.ndarray], prefix: str = ""
    ) -> PipelineArtifact:
        """Rebuild an artifact from ``metadata()`` and ``arrays()`` output.

        Raises:
            FormatError: unsupported artifact version or missing arrays.
        """
        version = metadata.get("artifact_version")
        if version != ARTIFACT_VERSION:
            raise exceptions.FormatError(
                f"Unsupported pipeline artifact version {version}"
            )
        stages = set(metadata["stages"])
        try:

            def get(name: str) -> np.ndarray:
                return arrays[prefix + name]

            return cls(
                kept_columns=tuple(metadata["kept_columns"]),
                removed_zero_variance=tuple(metadata["removed_zero_variance"]),
                removed_correlated=tuple(metadata["removed_correlated"]),
                class_names=tuple(metadata["class_names"]),
                scaler=metadata["scaler"],
                quantile=QuantileTables(
                    get("quantile/references"), get("quantile/quantiles")
                )
                if "quantile" in stages
                else None,
                robust=RobustScale(get("robust/center"), get("robust/scale"))
                if "robust" in stages
                else None,
                pca=PcaBasis(
                    get("pca/mean"),
                    get("pca/components"),
                    get("pca/explained_variance"),
                    get("pca/explained_variance_ratio"),
                )
                if "pca" in stages
                else None,
                unit_range=UnitRange(get("unit_range/minimum"), get("unit_range/span"))
                if "unit_range" in stages
                else None,
                fitted_rows=int(metadata["fitted_rows"]),
            )
        except KeyError as e:
            raise exceptions.FormatError(f"Pipeline artifact lacks array {e}")

    def to_bytes(self) -> bytes:
        return encode_container(ARTIFACT_KIND, self.metadata(), self.arrays())

    @classmethod
    def from_bytes(cls, data: bytes) -> PipelineArtifact:
        metadata, arrays = decode_container(data, ARTIFACT_KIND)
        return cls.from_parts(metadata, arrays)


def fit_pipeline(
    train: Dataset,
    options: PipelineOptions,
    removed_zero_variance: Sequence[str] = (),
    removed_correlated: Sequence[str] = (),
) -> PipelineArtifact:
    """Fit the scaler, PCA and unit-range stages on the training split.

    'train' must already be restricted to the kept columns.
    """
    features = train.features
    quantile = robust = pca = unit_range = None
    if options.scaler == "quantile":
        quantile = quantile_fit(features, options.n_quantiles)
        features = quantile_apply(quantile, features)
    elif options.scaler == "robust":
        robust = robust_scale_fit(features)
        features = robust_scale_apply(robust, features)
    if options.pca:
        pca = pca_fit(features, options.pca_variance, options.pca_components)
        features = pca_apply(pca, features)
    if options.unit_range:
        unit_range = unit_range_fit(features)

    return PipelineArtifact(
        kept_columns=train.feature_names,
        removed_zero_variance=tuple(removed_zero_variance),
        removed_correlated=tuple(removed_correlated),
        class_names=train.class_names,
        scaler=options.scaler,
        quantile=quantile,
        robust=robust,
        pca=pca,
        unit_range=unit_range,
        fitted_rows=train.n_rows,
    )
