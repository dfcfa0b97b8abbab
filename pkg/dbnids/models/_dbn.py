"""Deep Belief Network: greedily pretrained RBM stack unrolled into a
sigmoid feed-forward classifier with a softmax head"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from dbnids import exceptions
from dbnids.models._model import Classifier, narrow
from dbnids.models._network import DenseLayer, FeedForwardNetwork
from dbnids.models._training import (
    EpochRecord,
    FineTuneConfig,
    check_labels,
    train_network,
)
from dbnids.numerics import Labels, Matrix, Rng, xavier_init
from dbnids.pipeline import Dataset
from dbnids.rbm import CdConfig, RbmParams, pretrain, prop_up

logger = logging.getLogger(__name__)

# Five stacked RBMs: (49, 128), (128, 256), (256, 128), (128, 128), (128, 64)
DEFAULT_LAYER_SIZES = (49, 128, 256, 128, 128, 64)
DEFAULT_N_CLASSES = 6


@dataclass(frozen=True)
class DbnArchitecture:
    """Unit counts of the stack; RBM i maps layer i onto layer i + 1.

    Raises:
        ConfigError: fewer than two layers, an empty layer or fewer than two
            classes.
    """

    layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES
    n_classes: int = DEFAULT_N_CLASSES

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_sizes", tuple(self.layer_sizes))
        if len(self.layer_sizes) < 2:  # noqa: PLR2004
            raise exceptions.ConfigError("A DBN needs at least two layers")
        if min(self.layer_sizes) < 1:
            raise exceptions.ConfigError(f"Invalid layer sizes {self.layer_sizes}")
        if self.n_classes < 2:  # noqa: PLR2004
            raise exceptions.ConfigError("A classifier needs at least two classes")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    def rbm_shapes(self) -> list[tuple[int, int]]:
        return list(zip(self.layer_sizes, self.layer_sizes[1:]))


class DbnModel(Classifier):
    """RBM stack plus softmax head.

    In feed-forward mode each RBM contributes its weights and hidden bias;
    visible biases only matter during pretraining.

    *All parameters named below are not just constructor arguments but also
    instance attributes.*

    Args:
        architecture: Layer sizes and class count.
        rbms: One RbmParams per consecutive layer pair.
        head_weights: ``last hidden x n_classes``, None before fine-tuning.
        head_bias: Length ``n_classes``, None before fine-tuning.
        pretrained: Whether greedy pretraining produced the stack.
        fine_tuned: Whether supervised training produced the parameters.

    Raises:
        ShapeError: RBM or head dimensions do not match the architecture.
    """

    KIND = "dbn"

    def __init__(
        self,
        architecture: DbnArchitecture,
        rbms: Sequence[RbmParams],
        head_weights: Matrix | None = None,
        head_bias: Matrix | None = None,
        pretrained: bool = False,
        fine_tuned: bool = False,
    ):
        if [(r.n_visible, r.n_hidden) for r in rbms] != architecture.rbm_shapes():
            raise exceptions.ShapeError(
                f"RBM shapes do not chain as {architecture.layer_sizes}"
            )
        if (head_weights is None) != (head_bias is None):
            raise exceptions.ShapeError("Head weights and bias go together")
        head_shape = (architecture.layer_sizes[-1], architecture.n_classes)
        if head_weights is not None and head_bias is not None:
            if head_weights.shape != head_shape or head_bias.shape != head_shape[1:]:
                raise exceptions.ShapeError(
                    f"Head must be {head_shape[0]}x{head_shape[1]}, got "
                    f"{head_weights.shape} and {head_bias.shape}"
                )

        self.arch = architecture
        self.rbms = tuple(rbms)
        self.head_weights = head_weights
        self.head_bias = head_bias
        self.pretrained = pretrained
        self.fine_tuned = fine_tuned

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, DbnModel):
            return False
        return (
            self.architecture() == other.architecture()
            and self.rbms == other.rbms
            and _optional_equal(self.head_weights, other.head_weights)
            and _optional_equal(self.head_bias, other.head_bias)
        )

    @property
    def n_classes(self) -> int:
        return self.arch.n_classes

    @property
    def head_initialised(self) -> bool:
        return self.head_weights is not None

    def network(self) -> FeedForwardNetwork:
        """The unrolled feed-forward network (copies of the parameters).

        Raises:
            StateError: the head is not initialised.
        """
        if self.head_weights is None or self.head_bias is None:
            raise exceptions.StateError("DBN head is not initialised; fine-tune first")
        layers = [
            DenseLayer(rbm.weights.copy(), rbm.hidden_bias.copy(), "sigmoid")
            for rbm in self.rbms
        ]
        layers.append(
            DenseLayer(self.head_weights.copy(), self.head_bias.copy(), "linear")
        )
        return FeedForwardNetwork(layers)

    def with_network(self, network: FeedForwardNetwork, **flags: bool) -> DbnModel:
        """Copy with feed-forward parameters taken from 'network'.

        Visible biases are kept from this model.
        """
        rbms = [
            RbmParams(layer.weights.copy(), rbm.visible_bias, layer.bias.copy())
            for rbm, layer in zip(self.rbms, network.layers)
        ]
        head = network.layers[-1]
        return DbnModel(
            self.arch,
            rbms,
            head.weights.copy(),
            head.bias.copy(),
            pretrained=flags.get("pretrained", self.pretrained),
            fine_tuned=flags.get("fine_tuned", self.fine_tuned),
        )

    def predict_proba(self, batch: Matrix) -> Matrix:
        return self.network().predict_proba(batch)

    def architecture(self) -> dict[str, Any]:
        return {
            "kind": self.KIND,
            "layer_sizes": list(self.arch.layer_sizes),
            "n_classes": self.arch.n_classes,
            "pretrained": self.pretrained,
            "fine_tuned": self.fine_tuned,
            "head": self.head_initialised,
        }

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for i, rbm in enumerate(self.rbms):
            arrays.update(rbm.to_arrays(f"rbm-{i}"))
        if self.head_weights is not None and self.head_bias is not None:
            arrays["head/weights"] = self.head_weights
            arrays["head/bias"] = self.head_bias
        return arrays

    def narrowed(self) -> DbnModel:
        rbms = [
            RbmParams(narrow(r.weights), narrow(r.visible_bias), narrow(r.hidden_bias))
            for r in self.rbms
        ]
        return DbnModel(
            self.arch,
            rbms,
            None if self.head_weights is None else narrow(self.head_weights),
            None if self.head_bias is None else narrow(self.head_bias),
            self.pretrained,
            self.fine_tuned,
        )

    @classmethod
    def from_arrays(
        cls, architecture: dict[str, Any], arrays: dict[str, np.ndarray]
    ) -> DbnModel:
        arch = DbnArchitecture(
            tuple(architecture["layer_sizes"]), architecture["n_classes"]
        )
        rbms = [
            RbmParams.from_arrays(f"rbm-{i}", arrays)
            for i in range(len(arch.rbm_shapes()))
        ]
        head_weights = head_bias = None
        if architecture.get("head"):
            head_weights = np.asarray(arrays["head/weights"], dtype=np.float64)
            head_bias = np.asarray(arrays["head/bias"], dtype=np.float64)
        return cls(
            arch,
            rbms,
            head_weights,
            head_bias,
            pretrained=bool(architecture.get("pretrained")),
            fine_tuned=bool(architecture.get("fine_tuned")),
        )


def _optional_equal(a: Matrix | None, b: Matrix | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return bool(np.array_equal(a, b))


def greedy_pretrain(
    arch: DbnArchitecture, data: Matrix, cd_cfg: CdConfig, rng: Rng
) -> tuple[DbnModel, list[list[float]]]:
    """
    <Purpose>
      Train the RBMs of 'arch' one after another.  RBM i starts from
      ``RbmParams.initialise`` with ``rng.child("rbm-i/init")``, trains on the
      hidden probabilities of RBM i - 1 (the raw data for i = 0) with
      ``rng.child("rbm-i")``, and is frozen once trained.

    <Exceptions>
      dbnids.exceptions.ConfigError, if the data width is not the input
      size of 'arch'.

      dbnids.exceptions.DomainError, if the data leave [0, 1].

    <Returns>
      The pretrained model (head not initialised) and the reconstruction
      error history of every RBM.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != arch.input_size:  # noqa: PLR2004
        raise exceptions.ConfigError(
            f"Architecture expects {arch.input_size} inputs, data has shape "
            f"{data.shape}"
        )

    rbms: list[RbmParams] = []
    errors: list[list[float]] = []
    representation = data
    for i, (n_visible, n_hidden) in enumerate(arch.rbm_shapes()):
        logger.info("Pretraining RBM %d (%d x %d)", i, n_visible, n_hidden)
        params = RbmParams.initialise(n_visible, n_hidden, rng.child(f"rbm-{i}/init"))
        params, rbm_errors = pretrain(
            params, representation, cd_cfg, rng.child(f"rbm-{i}")
        )
        rbms.append(params)
        errors.append(rbm_errors)
        representation = prop_up(params, representation)

    return DbnModel(arch, rbms, pretrained=True), errors


def forward(model: DbnModel, batch: Matrix) -> Matrix:
    """Class probabilities of 'batch'.

    Raises:
        StateError: the head is not initialised.
    """
    return model.predict_proba(batch)


def fine_tune(
    model: DbnModel,
    train: Dataset,
    val: Dataset | None,
    cfg: FineTuneConfig,
    rng: Rng,
) -> tuple[DbnModel, list[EpochRecord]]:
    """Backpropagate the weighted cross-entropy through the unrolled stack.

    A missing head is initialised with Xavier weights from
    ``rng.child("head/init")`` and zero bias; batches are drawn from
    ``rng.child("train")``.

    Raises:
        DataError: a label is outside [0, n_classes).
    """
    check_labels(train.labels, model.n_classes)
    if not model.head_initialised:
        width = model.arch.layer_sizes[-1]
        model = DbnModel(
            model.arch,
            model.rbms,
            xavier_init(width, model.n_classes, rng.child("head/init")),
            np.zeros(model.n_classes),
            model.pretrained,
        )

    network, history = train_network(
        model.network(), train, val, cfg, rng.child("train")
    )
    return model.with_network(network, fine_tuned=True), history


def predict(model: DbnModel, batch: Matrix) -> Labels:
    """Argmax of ``forward``; ties go to the lowest class index."""
    return model.predict(batch)
