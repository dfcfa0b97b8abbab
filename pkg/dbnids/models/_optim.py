"""Gradient-descent optimisers updating parameter arrays in place"""

from __future__ import annotations

import logging
from abc import ABCMeta, abstractmethod

import numpy as np

from dbnids import exceptions
from dbnids.numerics import Matrix

logger = logging.getLogger(__name__)

# NOTE Optimiser dispatch table is defined here so it's usable by the
# training loop, but is populated in __init__.py (and can be appended by
# users).
OPTIMISER_FOR_NAME: dict[str, type[Optimiser]] = {}


class Optimiser(metaclass=ABCMeta):
    """Abstract first-order optimiser.

    Implementations keep per-parameter state (velocities, moments) keyed by
    position, so ``step`` must always be called with the same parameter list.
    """

    NAME: str

    def __init__(self, learning_rate: float):
        if not learning_rate >= 0:
            raise exceptions.ConfigError(
                f"Learning rate must be >= 0, got {learning_rate}"
            )
        self.learning_rate = learning_rate

    @abstractmethod
    def step(self, params: list[Matrix], gradients: list[Matrix]) -> None:
        """Update every array of 'params' in place from 'gradients'."""
        raise NotImplementedError  # pragma: no cover

    @staticmethod
    def _check(params: list[Matrix], gradients: list[Matrix]) -> None:
        if len(params) != len(gradients) or any(
            p.shape != g.shape for p, g in zip(params, gradients)
        ):
            raise exceptions.ShapeError("Gradients do not match the parameters")


class Sgd(Optimiser):
    """Stochastic gradient descent with classical momentum.

    ``v <- momentum * v - lr * g; p <- p + v``
    """

    NAME = "sgd"

    def __init__(self, learning_rate: float, momentum: float = 0.0):
        super().__init__(learning_rate)
        if not 0.0 <= momentum < 1.0:
            raise exceptions.ConfigError(f"Momentum must lie in [0, 1), got {momentum}")
        self.momentum = momentum
        self._velocity: list[Matrix] | None = None

    def step(self, params: list[Matrix], gradients: list[Matrix]) -> None:
        self._check(params, gradients)
        if self._velocity is None:
            self._velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, gradients, self._velocity):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


class Adam(Optimiser):
    """Adam with bias-corrected first and second moment estimates."""

    NAME = "adam"

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        super().__init__(learning_rate)
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0 and epsilon > 0):
            raise exceptions.ConfigError(
                f"Invalid Adam parameters beta1={beta1} beta2={beta2} "
                f"epsilon={epsilon}"
            )
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self._t = 0
        self._first: list[Matrix] | None = None
        self._second: list[Matrix] | None = None

    def step(self, params: list[Matrix], gradients: list[Matrix]) -> None:
        self._check(params, gradients)
        if self._first is None or self._second is None:
            self._first = [np.zeros_like(p) for p in params]
            self._second = [np.zeros_like(p) for p in params]

        self._t += 1
        correction1 = 1.0 - self.beta1**self._t
        correction2 = 1.0 - self.beta2**self._t
        for p, g, m, v in zip(params, gradients, self._first, self._second):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.epsilon
            )


def make_optimiser(
    name: str,
    learning_rate: float,
    momentum: float = 0.0,
) -> Optimiser:
    """Instantiate the optimiser registered under 'name'.

    Raises:
        ConfigError: 'name' is not registered.
    """
    if name not in OPTIMISER_FOR_NAME:
        raise exceptions.ConfigError(
            f"Unknown optimiser {name!r}, expected one of {sorted(OPTIMISER_FOR_NAME)}"
        )
    optimiser_class = OPTIMISER_FOR_NAME[name]
    if issubclass(optimiser_class, Sgd):
        return optimiser_class(learning_rate, momentum=momentum)
    return optimiser_class(learning_rate)
