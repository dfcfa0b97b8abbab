"""Baseline multi-layer perceptron: ReLU hidden layers, softmax output"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np

from dbnids import exceptions
from dbnids.models._model import Classifier, narrow
from dbnids.models._network import DenseLayer, FeedForwardNetwork
from dbnids.models._training import (
    EpochRecord,
    MlpTrainConfig,
    check_labels,
    train_network,
)
from dbnids.numerics import Labels, Matrix, Rng, xavier_init
from dbnids.pipeline import Dataset

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN_SIZES = (64, 64)


class MlpModel(Classifier):
    """Feed-forward classifier with layer sizes ``[n_in, *hidden, n_classes]``.

    Args:
        network: Hidden ReLU layers and a linear output layer.

    Raises:
        ConfigError: a hidden layer is not ReLU.
    """

    KIND = "mlp"

    def __init__(self, network: FeedForwardNetwork):
        if any(layer.activation != "relu" for layer in network.layers[:-1]):
            raise exceptions.ConfigError("MLP hidden layers use ReLU")
        self._network = network

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, MlpModel):
            return False
        mine, theirs = self._network.parameters(), other._network.parameters()
        return len(mine) == len(theirs) and all(
            np.array_equal(a, b) for a, b in zip(mine, theirs)
        )

    @classmethod
    def initialise(cls, layer_sizes: Sequence[int], rng: Rng) -> MlpModel:
        """Xavier weights from ``rng.child("layer-i/init")``, zero biases.

        Raises:
            ConfigError: fewer than two sizes or a size below 1.
        """
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:  # noqa: PLR2004
            raise exceptions.ConfigError(f"Invalid MLP layer sizes {layer_sizes}")
        n_layers = len(layer_sizes) - 1
        layers = [
            DenseLayer(
                xavier_init(n_in, n_out, rng.child(f"layer-{i}/init")),
                np.zeros(n_out),
                "linear" if i == n_layers - 1 else "relu",
            )
            for i, (n_in, n_out) in enumerate(zip(layer_sizes, layer_sizes[1:]))
        ]
        return cls(FeedForwardNetwork(layers))

    @property
    def layer_sizes(self) -> list[int]:
        layers = self._network.layers
        return [int(layers[0].weights.shape[0])] + [
            int(layer.weights.shape[1]) for layer in layers
        ]

    @property
    def n_classes(self) -> int:
        return self._network.n_classes

    def network(self) -> FeedForwardNetwork:
        """A copy of the underlying network."""
        return self._network.copy()

    def predict_proba(self, batch: Matrix) -> Matrix:
        return self._network.predict_proba(batch)

    def architecture(self) -> dict[str, Any]:
        return {"kind": self.KIND, "layer_sizes": self.layer_sizes}

    def to_arrays(self) -> dict[str, np.ndarray]:
        arrays: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self._network.layers):
            arrays[f"layer-{i}/weights"] = layer.weights
            arrays[f"layer-{i}/bias"] = layer.bias
        return arrays

    def narrowed(self) -> MlpModel:
        return MlpModel(
            FeedForwardNetwork(
                [
                    DenseLayer(
                        narrow(layer.weights), narrow(layer.bias), layer.activation
                    )
                    for layer in self._network.layers
                ]
            )
        )

    @classmethod
    def from_arrays(
        cls, architecture: dict[str, Any], arrays: dict[str, np.ndarray]
    ) -> MlpModel:
        n_layers = len(architecture["layer_sizes"]) - 1
        layers = [
            DenseLayer(
                np.asarray(arrays[f"layer-{i}/weights"], dtype=np.float64),
                np.asarray(arrays[f"layer-{i}/bias"], dtype=np.float64),
                "linear" if i == n_layers - 1 else "relu",
            )
            for i in range(n_layers)
        ]
        model = cls(FeedForwardNetwork(layers))
        if model.layer_sizes != list(architecture["layer_sizes"]):
            raise exceptions.FormatError("MLP parameters do not match layer sizes")
        return model


def mlp_train(
    data: Dataset,
    val: Dataset | None,
    cfg: MlpTrainConfig,
    rng: Rng,
    hidden_sizes: Sequence[int] = DEFAULT_HIDDEN_SIZES,
    n_classes: int | None = None,
) -> tuple[MlpModel, list[EpochRecord]]:
    """Train an MLP from Xavier initialisation (``rng.child("init")``) with
    batches drawn from ``rng.child("train")``.

    'n_classes' defaults to the number of class names of 'data'.

    Raises:
        DataError: a label is outside [0, n_classes).
    """
    if n_classes is None:
        n_classes = len(data.class_names)
    check_labels(data.labels, n_classes)

    model = MlpModel.initialise(
        [data.n_features, *hidden_sizes, n_classes], rng.child("init")
    )
    network, history = train_network(
        model.network(), data, val, cfg, rng.child("train")
    )
    return MlpModel(network), history


def mlp_predict(model: MlpModel, batch: Matrix) -> Labels:
    """Argmax of the class probabilities; ties go to the lowest index."""
    return model.predict(batch)
