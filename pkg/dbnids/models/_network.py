"""Dense feed-forward network with a softmax head and hand-written backprop"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from dbnids import exceptions
from dbnids.numerics import Labels, Matrix, log_softmax, matmul, relu, sigmoid, softmax

logger = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = ("sigmoid", "relu")


@dataclass(eq=False)
class DenseLayer:
    """Affine map ``x @ weights + bias`` followed by 'activation'.

    The last layer of a network is linear; the network applies softmax.
    """

    weights: Matrix
    bias: Matrix
    activation: str

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:  # noqa: PLR2004
            raise exceptions.ShapeError("Layer weights must be a matrix")
        if self.bias.shape != (self.weights.shape[1],):
            raise exceptions.ShapeError(
                f"Layer weights {self.weights.shape} and bias {self.bias.shape} "
                "do not agree"
            )
        if self.activation not in HIDDEN_ACTIVATIONS + ("linear",):
            raise exceptions.ConfigError(f"Unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise exceptions.DomainError("Layer parameters must be finite")


def _activate(activation: str, z: Matrix) -> Matrix:
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "relu":
        return relu(z)
    return z


def _activation_gradient(activation: str, z: Matrix, a: Matrix) -> Matrix:
    if activation == "sigmoid":
        return a * (1.0 - a)
    if activation == "relu":
        # zero at z == 0
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


class FeedForwardNetwork:
    """Stack of dense layers ending in a softmax over classes.

    Args:
        layers: Hidden layers followed by one linear output layer.

    Raises:
        ShapeError: consecutive layer dimensions do not chain.
        ConfigError: the output layer is not linear or a hidden one is.
    """

    def __init__(self, layers: Sequence[DenseLayer]):
        if not layers:
            raise exceptions.ConfigError("A network needs at least an output layer")
        for previous, layer in zip(layers, layers[1:]):
            if previous.weights.shape[1] != layer.weights.shape[0]:
                raise exceptions.ShapeError(
                    f"Layer of width {previous.weights.shape[1]} feeds a layer "
                    f"expecting {layer.weights.shape[0]} inputs"
                )
        if layers[-1].activation != "linear" or any(
            layer.activation == "linear" for layer in layers[:-1]
        ):
            raise exceptions.ConfigError(
                "Only the output layer of a network is linear"
            )
        self.layers = list(layers)

    @property
    def input_size(self) -> int:
        return int(self.layers[0].weights.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.layers[-1].weights.shape[1])

    def parameters(self) -> list[Matrix]:
        """The parameter arrays in layer order (weights, bias, ...).

        Arrays are returned by reference; optimisers update them in place.
        """
        return [p for layer in self.layers for p in (layer.weights, layer.bias)]

    def copy(self) -> FeedForwardNetwork:
        return FeedForwardNetwork(
            [
                DenseLayer(layer.weights.copy(), layer.bias.copy(), layer.activation)
                for layer in self.layers
            ]
        )

    def _forward(self, x: Matrix) -> tuple[list[Matrix], list[Matrix]]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_size:  # noqa: PLR2004
            raise exceptions.ShapeError(
                f"Network expects {self.input_size} input columns, got {x.shape}"
            )
        inputs = [x]
        pre_activations = []
        for layer in self.layers:
            z = matmul(inputs[-1], layer.weights) + layer.bias
            pre_activations.append(z)
            inputs.append(_activate(layer.activation, z))
        return inputs, pre_activations

    def logits(self, x: Matrix) -> Matrix:
        return self._forward(x)[1][-1]

    def predict_proba(self, x: Matrix) -> Matrix:
        """Class probabilities, one row per sample; rows sum to 1."""
        return softmax(self.logits(x))

    @staticmethod
    def _sample_weights(labels: Labels, weights: Matrix | None) -> Matrix:
        if weights is None:
            return np.ones(labels.shape[0])
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != labels.shape:
            raise exceptions.ShapeError(
                f"{weights.shape[0]} weights for {labels.shape[0]} samples"
            )
        return weights

    def _check_labels(self, labels: Labels) -> Labels:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise exceptions.DataError(f"Labels must lie in [0, {self.n_classes})")
        return labels

    def loss(self, x: Matrix, labels: Labels, weights: Matrix | None = None) -> float:
        """Weighted cross-entropy ``sum(w_i * -log p_i[y_i]) / n``."""
        labels = self._check_labels(labels)
        weights = self._sample_weights(labels, weights)
        if labels.size == 0:
            return 0.0
        log_probs = log_softmax(self.logits(x))
        picked = log_probs[np.arange(labels.size), labels]
        return float(-np.sum(weights * picked) / labels.size)

    def loss_and_gradients(
        self, x: Matrix, labels: Labels, weights: Matrix | None = None
    ) -> tuple[float, list[Matrix]]:
        """
        Return the weighted cross-entropy of the batch and its gradient with
        respect to every array of ``parameters()``, in the same order.

        At the logits the gradient is ``w_i * (p_i - onehot(y_i)) / n``.

        Raises:
            DataError: a label is outside [0, n_classes).
            ShapeError: input width or weight count mismatch.
        """
        labels = self._check_labels(labels)
        weights = self._sample_weights(labels, weights)
        n = labels.size
        if n == 0:
            raise exceptions.DataError("Cannot compute gradients of an empty batch")

        inputs, pre_activations = self._forward(x)
        log_probs = log_softmax(pre_activations[-1])
        rows = np.arange(n)
        loss = float(-np.sum(weights * log_probs[rows, labels]) / n)

        delta = np.exp(log_probs)
        delta[rows, labels] -= 1.0
        delta *= weights[:, None] / n

        gradients: list[Matrix] = []
        for i in reversed(range(len(self.layers))):
            gradients.append(delta.sum(axis=0))
            gradients.append(inputs[i].T @ delta)
            if i > 0:
                previous = self.layers[i - 1]
                delta = (delta @ self.layers[i].weights.T) * _activation_gradient(
                    previous.activation, pre_activations[i - 1], inputs[i]
                )
        gradients.reverse()
        return loss, gradients
