"""Supervised mini-batch training shared by the DBN and MLP classifiers"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Any

import numpy as np

from dbnids import exceptions
from dbnids.evaluation import confusion, metrics
from dbnids.models._network import FeedForwardNetwork
from dbnids.models._optim import make_optimiser
from dbnids.numerics import Labels, Matrix, Rng
from dbnids.pipeline import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrainConfig:
    """Supervised training hyper-parameters.

    Attributes:
        epochs: Full passes over the training split.
        learning_rate: Step size; 0 leaves the parameters untouched.
        batch_size: Rows per update; a final partial batch is used as is.
        optimiser: Name registered in ``OPTIMISER_FOR_NAME``.
        momentum: SGD momentum (ignored by Adam).
        class_weights: Optional loss weight per class index.
        sample_weights: Optional loss weight per training row.
        weighted_batches: Draw batch rows with probability proportional to
            their weight (and train on them unweighted) instead of weighting
            their loss terms.
        select_best: Keep the parameters of the epoch with the best
            validation macro-F1 (earliest epoch on ties).

    Raises:
        ConfigError: a value is out of range.
    """

    epochs: int = 30
    learning_rate: float = 0.001
    batch_size: int = 128
    optimiser: str = "adam"
    momentum: float = 0.0
    class_weights: tuple[float, ...] | None = None
    sample_weights: Matrix | None = None
    weighted_batches: bool = False
    select_best: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise exceptions.ConfigError(f"Epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate >= 0:
            raise exceptions.ConfigError(
                f"Learning rate must be >= 0, got {self.learning_rate}"
            )
        if self.batch_size < 1:
            raise exceptions.ConfigError(
                f"Batch size must be >= 1, got {self.batch_size}"
            )
        if self.class_weights is not None and min(self.class_weights) < 0:
            raise exceptions.ConfigError("Class weights must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        """Hyper-parameters for echoing into reports (weights summarised)."""
        result: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "sample_weights":
                value = value is not None
            elif f.name == "class_weights" and value is not None:
                value = list(value)
            result[f.name] = value
        return result


@dataclass(frozen=True, eq=False)
class FineTuneConfig(TrainConfig):
    """DBN fine-tuning: 30 epochs of Adam at 0.001 over batches of 128."""


@dataclass(frozen=True, eq=False)
class MlpTrainConfig(TrainConfig):
    """MLP baseline: 10 epochs of SGD at 0.02, momentum 0.9, batches of 64."""

    epochs: int = 10
    learning_rate: float = 0.02
    batch_size: int = 64
    optimiser: str = "sgd"
    momentum: float = 0.9


@dataclass
class EpochRecord:
    """Training history entry; validation fields are None without a
    validation split."""

    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_accuracy: float | None = None
    val_macro_f1: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "val_macro_f1": self.val_macro_f1,
        }


def check_labels(labels: Labels, n_classes: int) -> None:
    """Raise DataError unless every label lies in [0, n_classes)."""
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise exceptions.DataError(f"Labels must lie in [0, {n_classes})")


def row_weights(train: Dataset, cfg: TrainConfig) -> Matrix:
    """Per-row loss weights combining class and sample weights."""
    weights = np.ones(train.n_rows)
    if cfg.class_weights is not None:
        class_weights = np.asarray(cfg.class_weights, dtype=np.float64)
        if class_weights.shape[0] <= train.labels.max(initial=-1):
            raise exceptions.DataError(
                f"{class_weights.shape[0]} class weights for labels up to "
                f"{train.labels.max()}"
            )
        weights = weights * class_weights[train.labels]
    if cfg.sample_weights is not None:
        sample_weights = np.asarray(cfg.sample_weights, dtype=np.float64)
        if sample_weights.shape != (train.n_rows,):
            raise exceptions.DataError(
                f"{sample_weights.shape[0]} sample weights for {train.n_rows} rows"
            )
        weights = weights * sample_weights
    return weights


def _validate(
    network: FeedForwardNetwork, val: Dataset
) -> tuple[float, float, float]:
    probs = network.predict_proba(val.features)
    predicted = np.argmax(probs, axis=1)
    report = metrics(confusion(val.labels, predicted, network.n_classes))
    return network.loss(val.features, val.labels), report.accuracy, report.macro_f1


def train_network(
    network: FeedForwardNetwork,
    train: Dataset,
    val: Dataset | None,
    cfg: TrainConfig,
    rng: Rng,
) -> tuple[FeedForwardNetwork, list[EpochRecord]]:
    """
    <Purpose>
      Minimise the weighted cross-entropy of 'network' on 'train' by
      mini-batch gradient descent.  Epoch e draws its batch order from
      ``rng.child("epoch-e")``.  After every epoch the full-pass training
      loss and, if 'val' is given, the validation loss, accuracy and
      macro-F1 are recorded.

      'network' itself is not modified; a trained copy is returned.

    <Exceptions>
      dbnids.exceptions.DataError, if a label is outside the network's
      classes or the weights do not fit the training split.

    <Returns>
      The trained network (the best validation epoch's when
      'cfg.select_best') and the per-epoch history.
    """
    check_labels(train.labels, network.n_classes)
    if val is not None:
        check_labels(val.labels, network.n_classes)
        if val.n_rows == 0:
            val = None
    if train.n_rows == 0:
        raise exceptions.DataError("Cannot train on an empty split")

    network = network.copy()
    weights = row_weights(train, cfg)
    if cfg.weighted_batches and not weights.sum() > 0:
        raise exceptions.DataError("Weighted batches need a positive total weight")

    optimiser = make_optimiser(cfg.optimiser, cfg.learning_rate, cfg.momentum)
    params = network.parameters()
    n = train.n_rows
    history: list[EpochRecord] = []
    best: tuple[float, FeedForwardNetwork] | None = None

    for epoch in range(cfg.epochs):
        epoch_rng = rng.child(f"epoch-{epoch}")
        if cfg.weighted_batches:
            order = epoch_rng.choice(n, n, replace=True, p=weights / weights.sum())
            batch_weights = np.ones(n)
        else:
            order = epoch_rng.permutation(n)
            batch_weights = weights

        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            loss, gradients = network.loss_and_gradients(
                train.features[rows], train.labels[rows], batch_weights[rows]
            )
            optimiser.step(params, gradients)
            logger.debug("epoch %d batch %d loss %.6f", epoch + 1, start, loss)

        record = EpochRecord(
            epoch + 1, network.loss(train.features, train.labels, weights)
        )
        if val is not None:
            val_loss, val_accuracy, val_macro_f1 = _validate(network, val)
            record.val_loss = val_loss
            record.val_accuracy = val_accuracy
            record.val_macro_f1 = val_macro_f1
            if cfg.select_best and (best is None or val_macro_f1 > best[0]):
                best = (val_macro_f1, network.copy())
        history.append(record)
        logger.info(
            "epoch %d/%d train loss %.6f val macro-F1 %s",
            epoch + 1,
            cfg.epochs,
            record.train_loss,
            "n/a" if record.val_macro_f1 is None else f"{record.val_macro_f1:.4f}",
        )

    if best is not None:
        logger.info("Keeping parameters with validation macro-F1 %.4f", best[0])
        return best[1], history
    return network, history
