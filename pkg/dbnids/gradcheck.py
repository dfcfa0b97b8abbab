"""Finite-difference verification of the hand-written backpropagation.

``run_gradcheck`` builds tiny DBN and MLP classifiers from a seed and
compares every analytic gradient entry with a central difference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from dbnids.models import DbnArchitecture, DbnModel, FeedForwardNetwork, MlpModel
from dbnids.numerics import Labels, Matrix, Rng, xavier_init
from dbnids.rbm import RbmParams

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
_ERROR_FLOOR = 1e-6


@dataclass
class GradcheckResult:
    name: str
    max_relative_error: float
    n_parameters: int
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "max_relative_error": self.max_relative_error,
            "n_parameters": self.n_parameters,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def relative_error(analytic: Matrix, numeric: Matrix) -> Matrix:
    """``|a - n| / max(|a| + |n|, 1e-6)`` elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), _ERROR_FLOOR)
    return np.abs(analytic - numeric) / scale


def check_network_gradients(
    network: FeedForwardNetwork,
    x: Matrix,
    labels: Labels,
    weights: Matrix | None = None,
    step: float = DEFAULT_STEP,
) -> float:
    """Largest relative error between ``loss_and_gradients`` and central
    differences of ``loss`` over every parameter entry.

    The network is perturbed in place and restored entry by entry.
    """
    _, gradients = network.loss_and_gradients(x, labels, weights)
    worst = 0.0
    for param, gradient in zip(network.parameters(), gradients):
        numeric = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + step
            loss_plus = network.loss(x, labels, weights)
            param[index] = original - step
            loss_minus = network.loss(x, labels, weights)
            param[index] = original
            numeric[index] = (loss_plus - loss_minus) / (2.0 * step)
        worst = max(worst, float(np.max(relative_error(gradient, numeric))))
    return worst


def _tiny_dbn(rng: Rng) -> FeedForwardNetwork:
    arch = DbnArchitecture((4, 3, 3), n_classes=3)
    rbms = [
        RbmParams.initialise(n_visible, n_hidden, rng.child(f"rbm-{i}"))
        for i, (n_visible, n_hidden) in enumerate(arch.rbm_shapes())
    ]
    model = DbnModel(
        arch,
        rbms,
        xavier_init(3, 3, rng.child("head")),
        rng.child("head-bias").normal(0.0, 0.1, 3),
    )
    return model.network()


def run_gradcheck(
    seed: int = 0,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[GradcheckResult]:
    """Check the DBN fine-tuning gradients (layers 4-3-3, 3 classes, 5
    samples), the same with per-sample weights, and the MLP gradients
    (layers 4-3-3-2, 5 samples)."""
    rng = Rng(seed)
    data_rng = rng.child("data")
    x = data_rng.random((5, 4))
    labels3 = data_rng.integers(0, 3, 5)
    labels2 = data_rng.integers(0, 2, 5)
    weights = data_rng.uniform(0.5, 2.0, 5)

    dbn = _tiny_dbn(rng.child("dbn"))
    mlp = MlpModel.initialise([4, 3, 3, 2], rng.child("mlp")).network()
    # Shift ReLU pre-activations away from the kink at 0.
    for layer in mlp.layers[:-1]:
        layer.bias += 0.1

    suites = (
        ("dbn", dbn, labels3, None),
        ("dbn-weighted", dbn, labels3, weights),
        ("mlp", mlp, labels2, None),
        ("mlp-weighted", mlp, labels2, weights),
    )
    results = []
    for name, network, labels, sample_weights in suites:
        error = check_network_gradients(network, x, labels, sample_weights, step)
        n_parameters = sum(p.size for p in network.parameters())
        result = GradcheckResult(name, error, n_parameters, tolerance)
        logger.info(
            "gradcheck %s: max relative error %.3e over %d parameters",
            name,
            error,
            n_parameters,
        )
        results.append(result)
    return results
