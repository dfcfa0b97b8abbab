"""
<Program Name>
  balancing.py

<Purpose>
  Class-imbalance treatments for the training split: random under-sampling,
  random over-sampling, SMOTE, class weights and per-sample weights.

  Resamplers take and return a Dataset; they are only ever handed the
  training split, so validation and test rows are never resampled.  Target
  counts are keyed by class name.  Each class draws from its own named child
  stream, so results depend only on the seed.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from dbnids import exceptions
from dbnids.numerics import Labels, Matrix, Rng
from dbnids.pipeline import Dataset

logger = logging.getLogger(__name__)

STRATEGIES = (
    "none",
    "undersample",
    "oversample",
    "smote",
    "smote+undersample",
    "class_weights",
    "sample_weights",
)
DEFAULT_SMOTE_K = 5
DEFAULT_REFERENCE_CLASS = "PortScan"

# Upper bound on the floats held by one block of pairwise differences.
_KNN_BLOCK_FLOATS = 2**22


@dataclass(frozen=True)
class BalanceSpec:
    """How to balance the training split.

    Attributes:
        strategy: One of ``STRATEGIES``.
        targets: Per-class target counts overriding the strategy defaults.
        smote_k: Neighbours considered by SMOTE.
        reference_class: Class whose count is the common target of
            smote+undersample (the median class count if it is absent).
        weighted_batches: Realise sample weights by weighted batch sampling
            instead of weighted loss terms.

    Raises:
        ConfigError: unknown strategy, non-positive target or smote_k < 1.
    """

    strategy: str = "none"
    targets: Mapping[str, int] = field(default_factory=dict)
    smote_k: int = DEFAULT_SMOTE_K
    reference_class: str = DEFAULT_REFERENCE_CLASS
    weighted_batches: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise exceptions.ConfigError(
                f"Unknown balancing strategy {self.strategy!r}, "
                f"expected one of {STRATEGIES}"
            )
        if self.smote_k < 1:
            raise exceptions.ConfigError(f"smote_k must be >= 1, got {self.smote_k}")
        for name, target in self.targets.items():
            if target < 1:
                raise exceptions.ConfigError(
                    f"Target count for {name!r} must be positive, got {target}"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy,
            "targets": dict(self.targets),
            "smote_k": self.smote_k,
            "reference_class": self.reference_class,
            "weighted_batches": self.weighted_batches,
        }


def _class_members(ds: Dataset, name: str) -> npt.NDArray[np.int64]:
    if name not in ds.class_names:
        raise exceptions.ConfigError(f"Unknown class {name!r} in balancing targets")
    return np.flatnonzero(ds.labels == ds.class_names.index(name))


def random_undersample(
    ds: Dataset, targets: Mapping[str, int], rng: Rng
) -> Dataset:
    """Keep a uniform random subset of 'targets[c]' rows of every class c in
    'targets'; other classes are untouched.  Row order is preserved.

    Raises:
        ConfigError: a target exceeds the rows available.
    """
    keep = np.ones(ds.n_rows, dtype=bool)
    for name, target in targets.items():
        members = _class_members(ds, name)
        if target > members.size:
            raise exceptions.ConfigError(
                f"Cannot undersample {name!r} to {target}, only {members.size} rows"
            )
        chosen = rng.child(f"undersample/{name}").permutation(members.size)[:target]
        dropped = np.setdiff1d(np.arange(members.size), chosen)
        keep[members[dropped]] = False
    return ds.subset(np.flatnonzero(keep))


def random_oversample(
    ds: Dataset, targets: Mapping[str, int], rng: Rng
) -> Dataset:
    """Duplicate uniformly drawn rows of every class c until it has
    'targets[c]' rows.  Duplicates are appended after the original rows.

    Raises:
        ConfigError: a target is below the current count or a class is empty.
    """
    extra: list[npt.NDArray[np.int64]] = []
    for name, target in targets.items():
        members = _class_members(ds, name)
        if target < members.size:
            raise exceptions.ConfigError(
                f"Cannot oversample {name!r} to {target}, it already has "
                f"{members.size} rows"
            )
        if target > members.size:
            if members.size == 0:
                raise exceptions.ConfigError(f"Cannot oversample empty class {name!r}")
            picks = rng.child(f"oversample/{name}").integers(
                0, members.size, target - members.size
            )
            extra.append(members[picks])
    if not extra:
        return ds.subset(np.arange(ds.n_rows))
    return ds.subset(np.concatenate([np.arange(ds.n_rows), *extra]))


def nearest_neighbours(points: Matrix, k: int) -> npt.NDArray[np.int64]:
    """Indices of the k nearest other points of every point (exact
    Euclidean, brute force).  Equal distances keep index order.

    Raises:
        DomainError: k is not in [1, len(points) - 1].
    """
    points = np.asarray(points, dtype=np.float64)
    n, width = points.shape
    if not 1 <= k < n:
        raise exceptions.DomainError(f"Cannot find {k} neighbours among {n} points")

    block = max(1, _KNN_BLOCK_FLOATS // max(n * width, 1))
    result = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        differences = points[start:stop, None, :] - points[None, :, :]
        distances = np.sum(differences * differences, axis=2)
        distances[np.arange(stop - start), np.arange(start, stop)] = np.inf
        result[start:stop] = np.argsort(distances, axis=1, kind="stable")[:, :k]
    return result


def smote(
    ds: Dataset, targets: Mapping[str, int], k: int, rng: Rng
) -> Dataset:
    """
    <Purpose>
      Synthesise rows of every class c in 'targets' until it has
      'targets[c]' rows.  Each synthetic row picks a parent x of its class
      uniformly, one of the parent's k nearest same-class neighbours n
      uniformly, and a u uniform in [0, 1), and is ``x + u * (n - x)``.
      Originals are kept; synthetics are appended after them.

      If a class has k or fewer rows, k is lowered to its size minus one
      with a warning.

    <Exceptions>
      dbnids.exceptions.ConfigError, if k < 1, a class to grow has fewer
      than 2 rows, or a target is below the current count.

    <Returns>
      The augmented Dataset.
    """
    if k < 1:
        raise exceptions.ConfigError(f"smote k must be >= 1, got {k}")

    features = [ds.features]
    labels = [ds.labels]
    for name, target in targets.items():
        members = _class_members(ds, name)
        if target < members.size:
            raise exceptions.ConfigError(
                f"Cannot SMOTE {name!r} to {target}, it already has "
                f"{members.size} rows"
            )
        n_new = target - members.size
        if n_new == 0:
            continue
        if members.size < 2:  # noqa: PLR2004
            raise exceptions.ConfigError(
                f"SMOTE needs at least 2 rows of {name!r}, found {members.size}"
            )

        class_k = k
        if class_k >= members.size:
            class_k = members.size - 1
            logger.warning(
                "Class %r has %d rows; SMOTE uses k=%d instead of %d",
                name,
                members.size,
                class_k,
                k,
            )

        points = ds.features[members]
        neighbours = nearest_neighbours(points, class_k)
        class_rng = rng.child(f"smote/{name}")
        parents = class_rng.integers(0, members.size, n_new)
        picks = class_rng.integers(0, class_k, n_new)
        gaps = class_rng.random((n_new, 1))
        origins = points[parents]
        features.append(origins + gaps * (points[neighbours[parents, picks]] - origins))
        labels.append(np.full(n_new, ds.class_names.index(name), dtype=np.int64))
        logger.info("SMOTE added %d rows to %r", n_new, name)

    return Dataset(
        np.concatenate(features),
        np.concatenate(labels),
        ds.feature_names,
        ds.class_names,
    )


def class_weights(counts: Sequence[int] | np.ndarray) -> Matrix:
    """``w_c = N / (C * count_c)`` so that ``sum_c w_c * count_c = N``.

    Raises:
        DataError: a count is zero.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0 or counts.min() <= 0:
        raise exceptions.DataError("Class weights need a positive count per class")
    return counts.sum() / (counts.size * counts)


def sample_weights(labels: Labels, n_classes: int) -> Matrix:
    """The class weight of every sample's class.

    Raises:
        DataError: a class has no samples.
    """
    labels = np.asarray(labels, dtype=np.int64)
    return class_weights(np.bincount(labels, minlength=n_classes))[labels]


def present_class_weights(labels: Labels, n_classes: int) -> Matrix:
    """Class weights over the classes that have rows in 'labels'.

    ``class_weights`` of the C' present classes, with C' in place of C.
    Classes without rows get weight 0; no sample carries them.

    Raises:
        DataError: 'labels' is empty.
    """
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    present = np.flatnonzero(counts > 0)
    if present.size == 0:
        raise exceptions.DataError("Class weights need at least one labelled row")
    weights = np.zeros(n_classes, dtype=np.float64)
    weights[present] = class_weights(counts[present])
    return weights


def default_targets(ds: Dataset, spec: BalanceSpec) -> dict[str, int]:
    """Target counts of 'spec' for 'ds', defaults overridden by
    ``spec.targets``.

    undersample shrinks every class to the smallest count; oversample and
    smote grow every class to the largest; smote+undersample brings every
    class to the reference class count.  Empty classes get no target.
    """
    counts = {name: c for name, c in ds.class_counts().items() if c > 0}
    if not counts:
        raise exceptions.DataError("Cannot balance an empty dataset")

    if spec.strategy == "undersample":
        common = min(counts.values())
    elif spec.strategy in ("oversample", "smote"):
        common = max(counts.values())
    elif spec.strategy == "smote+undersample":
        if spec.reference_class in counts:
            common = counts[spec.reference_class]
        else:
            common = int(np.median(list(counts.values())))
            logger.info(
                "Reference class %r absent, using the median count %d",
                spec.reference_class,
                common,
            )
    else:
        return {}

    targets = {name: common for name in counts}
    targets.update(spec.targets)
    return targets


@dataclass(eq=False)
class BalanceResult:
    """Balanced training data and the loss weights to train it with."""

    dataset: Dataset
    class_weights: tuple[float, ...] | None = None
    sample_weights: Matrix | None = None


def apply_balance(ds: Dataset, spec: BalanceSpec, rng: Rng) -> BalanceResult:
    """Apply 'spec' to the training split 'ds'.

    smote+undersample first undersamples the classes above their target,
    then SMOTEs the classes below it.
    """
    logger.info("Class counts before %s: %s", spec.strategy, ds.class_counts())
    targets = default_targets(ds, spec)
    counts = ds.class_counts()
    result = BalanceResult(ds)

    if spec.strategy == "undersample":
        result.dataset = random_undersample(ds, targets, rng)
    elif spec.strategy == "oversample":
        result.dataset = random_oversample(ds, targets, rng)
    elif spec.strategy == "smote":
        result.dataset = smote(ds, targets, spec.smote_k, rng)
    elif spec.strategy == "smote+undersample":
        shrink = {n: t for n, t in targets.items() if t < counts[n]}
        grow = {n: t for n, t in targets.items() if t > counts[n]}
        reduced = random_undersample(ds, shrink, rng)
        result.dataset = smote(reduced, grow, spec.smote_k, rng)
    elif spec.strategy == "class_weights":
        weights = present_class_weights(ds.labels, len(ds.class_names))
        result.class_weights = tuple(float(w) for w in weights)
    elif spec.strategy == "sample_weights":
        weights = present_class_weights(ds.labels, len(ds.class_names))
        result.sample_weights = weights[ds.labels]

    logger.info(
        "Class counts after %s: %s", spec.strategy, result.dataset.class_counts()
    )
    return result
