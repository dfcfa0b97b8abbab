"""Multi-class evaluation: confusion matrices, per-class and aggregate
precision, recall and F1, and their text and record renderings.

Confusion matrices use rows for the actual class and columns for the
predicted class.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from dbnids import exceptions

logger = logging.getLogger(__name__)

# Of the three aggregates, macro averaging reproduces the published overall
# DBN precision from its confusion matrix; reports label it accordingly.
BEST_MATCH_AGGREGATE = "macro"
AGGREGATES = ("micro", "macro", "weighted")


@dataclass(eq=False)
class ConfusionMatrix:
    """Square matrix of counts, ``counts[actual, predicted]``."""

    counts: npt.NDArray[np.int64]
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.class_names = tuple(self.class_names)
        n = len(self.class_names)
        if self.counts.shape != (n, n):
            raise exceptions.DataError(
                f"Confusion matrix of shape {self.counts.shape} for {n} classes"
            )
        if self.counts.size and self.counts.min() < 0:
            raise exceptions.DataError("Confusion counts must be non-negative")

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return False
        return self.class_names == other.class_names and np.array_equal(
            self.counts, other.counts
        )

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict[str, Any]:
        return {
            "class_names": list(self.class_names),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ConfusionMatrix:
        return cls(np.array(data["counts"], dtype=np.int64), tuple(data["class_names"]))


def confusion(
    actual: Sequence[int] | np.ndarray,
    predicted: Sequence[int] | np.ndarray,
    n_classes: int,
    class_names: Sequence[str] | None = None,
) -> ConfusionMatrix:
    """Count (actual, predicted) pairs.

    Raises:
        DataError: lengths differ or a label is outside [0, n_classes).
    """
    actual = np.asarray(actual, dtype=np.int64).ravel()
    predicted = np.asarray(predicted, dtype=np.int64).ravel()
    if actual.shape != predicted.shape:
        raise exceptions.DataError(
            f"{actual.size} actual labels but {predicted.size} predictions"
        )
    for name, labels in (("actual", actual), ("predicted", predicted)):
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise exceptions.DataError(f"{name} labels must lie in [0, {n_classes})")

    if class_names is None:
        class_names = [str(i) for i in range(n_classes)]
    elif len(class_names) != n_classes:
        raise exceptions.DataError(
            f"{len(class_names)} class names for {n_classes} classes"
        )

    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    return ConfusionMatrix(counts, tuple(class_names))


@dataclass
class ClassMetrics:
    """Precision, recall and F1 of one class.

    'undefined' names the metrics whose denominator was zero; those are
    reported as 0.
    """

    name: str
    precision: float
    recall: float
    f1: float
    support: int
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "undefined": list(self.undefined),
        }


@dataclass
class EvalReport:
    """Evaluation of one confusion matrix.

    Attributes:
        confusion: The evaluated matrix.
        per_class: One entry per class, in class order.
        aggregates: ``{"micro"|"macro"|"weighted": {"precision", "recall",
            "f1"}}``.
        accuracy: Fraction of correctly classified samples.
    """

    confusion: ConfusionMatrix
    per_class: list[ClassMetrics]
    aggregates: dict[str, dict[str, float]]
    accuracy: float

    @property
    def macro_f1(self) -> float:
        return self.aggregates["macro"]["f1"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "confusion": self.confusion.to_dict(),
            "per_class": [metrics.to_dict() for metrics in self.per_class],
            "aggregates": self.aggregates,
            "accuracy": self.accuracy,
            "best_match": BEST_MATCH_AGGREGATE,
        }


def _ratio(numerator: float, denominator: float) -> tuple[float, bool]:
    if denominator == 0:
        return 0.0, True
    return float(numerator) / float(denominator), False


def _f1(precision: float, recall: float) -> tuple[float, bool]:
    return _ratio(2.0 * precision * recall, precision + recall)


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """
    <Purpose>
      Compute per-class precision ``TP/(TP+FP)``, recall ``TP/(TP+FN)`` and
      their harmonic mean F1, plus the micro (global counts), macro
      (unweighted class mean) and weighted (support-weighted mean)
      aggregates.  A zero denominator yields 0 and is recorded in
      ``ClassMetrics.undefined``.

    <Exceptions>
      dbnids.exceptions.DataError, if the matrix holds no counts.

    <Returns>
      An EvalReport.
    """
    total = cm.total
    if total == 0:
        raise exceptions.DataError("Cannot evaluate an empty confusion matrix")

    counts = cm.counts
    true_positives = np.diag(counts)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)

    per_class = []
    for i, name in enumerate(cm.class_names):
        precision, no_precision = _ratio(true_positives[i], predicted[i])
        recall, no_recall = _ratio(true_positives[i], support[i])
        f1, no_f1 = _f1(precision, recall)
        undefined = [
            metric
            for metric, flag in (
                ("precision", no_precision),
                ("recall", no_recall),
                ("f1", no_f1),
            )
            if flag
        ]
        if undefined:
            logger.debug("Class %s: undefined %s, reported as 0", name, undefined)
        per_class.append(
            ClassMetrics(name, precision, recall, f1, int(support[i]), undefined)
        )

    # For single-label data every false positive is some other class's false
    # negative, so micro precision, recall and F1 all equal accuracy.
    accuracy = float(true_positives.sum()) / total
    micro_f1, _ = _f1(accuracy, accuracy)

    def mean(values: list[float], weights: np.ndarray | None = None) -> float:
        return float(np.average(values, weights=weights))

    precisions = [m.precision for m in per_class]
    recalls = [m.recall for m in per_class]
    f1s = [m.f1 for m in per_class]
    aggregates = {
        "micro": {"precision": accuracy, "recall": accuracy, "f1": micro_f1},
        "macro": {
            "precision": mean(precisions),
            "recall": mean(recalls),
            "f1": mean(f1s),
        },
        "weighted": {
            "precision": mean(precisions, support),
            "recall": mean(recalls, support),
            "f1": mean(f1s, support),
        },
    }
    return EvalReport(cm, per_class, aggregates, accuracy)


def format_table(report: EvalReport) -> str:
    """Render the confusion matrix with per-class precision/recall/F1 rows
    and all aggregates as fixed-width text."""
    names = report.confusion.class_names
    width = max(12, *(len(name) + 2 for name in names))
    header = "Actual \\ Predicted".ljust(20) + "".join(
        name.rjust(width) for name in names
    )
    lines = [header]
    for name, row in zip(names, report.confusion.counts):
        lines.append(name.ljust(20) + "".join(str(c).rjust(width) for c in row))

    lines.append("")
    for metric in ("precision", "recall", "f1"):
        values = [getattr(m, metric) for m in report.per_class]
        lines.append(
            metric.capitalize().ljust(20)
            + "".join(f"{100 * v:.1f}%".rjust(width) for v in values)
        )

    lines.append("")
    lines.append(f"Accuracy: {report.accuracy:.4f}")
    for aggregate in AGGREGATES:
        values = report.aggregates[aggregate]
        label = aggregate
        if aggregate == BEST_MATCH_AGGREGATE:
            label += " (best match)"
        lines.append(
            f"{label.ljust(20)} precision {values['precision']:.4f}  "
            f"recall {values['recall']:.4f}  f1 {values['f1']:.4f}"
        )
    return "\n".join(lines)


def report_records(report: EvalReport, **context: Any) -> list[dict[str, Any]]:
    """One record per class plus one per aggregate, each carrying 'context'
    (e.g. split and model kind) for machine consumption."""
    records: list[dict[str, Any]] = []
    for class_metrics in report.per_class:
        record = {"record": "class", **context, **class_metrics.to_dict()}
        records.append(record)
    for aggregate in AGGREGATES:
        records.append(
            {
                "record": "aggregate",
                **context,
                "name": aggregate,
                "best_match": aggregate == BEST_MATCH_AGGREGATE,
                **report.aggregates[aggregate],
            }
        )
    records.append(
        {
            "record": "confusion",
            **context,
            "accuracy": report.accuracy,
            **report.confusion.to_dict(),
        }
    )
    return records
