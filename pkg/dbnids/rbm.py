"""Restricted Boltzmann Machine with Contrastive Divergence training.

Besides training, this module carries the exact quantities of the energy
model (energy, partition function, marginals, log-likelihood gradient).
Those enumerate every joint configuration and are only available for tiny
machines (``ENUMERATION_LIMIT`` units in total); they serve as oracles for
the sampled quantities.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from dbnids import exceptions
from dbnids.numerics import (
    Matrix,
    Rng,
    bernoulli_sample,
    log_sum_exp,
    sigmoid,
    xavier_init,
)

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 20


@dataclass(frozen=True, eq=False)
class RbmParams:
    """Parameters of one RBM.

    Attributes:
        weights: ``n_visible x n_hidden`` coupling matrix.
        visible_bias: Length ``n_visible``.
        hidden_bias: Length ``n_hidden``.

    Raises:
        ShapeError: dimensions do not agree.
        DomainError: a parameter is not finite.
    """

    weights: Matrix
    visible_bias: Matrix
    hidden_bias: Matrix

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:  # noqa: PLR2004
            raise exceptions.ShapeError("RBM weights must be a matrix")
        n_visible, n_hidden = self.weights.shape
        if self.visible_bias.shape != (n_visible,):
            raise exceptions.ShapeError(
                f"Visible bias has shape {self.visible_bias.shape}, "
                f"expected ({n_visible},)"
            )
        if self.hidden_bias.shape != (n_hidden,):
            raise exceptions.ShapeError(
                f"Hidden bias has shape {self.hidden_bias.shape}, "
                f"expected ({n_hidden},)"
            )
        for array in (self.weights, self.visible_bias, self.hidden_bias):
            if not np.all(np.isfinite(array)):
                raise exceptions.DomainError("RBM parameters must be finite")

    @property
    def n_visible(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_hidden(self) -> int:
        return int(self.weights.shape[1])

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> RbmParams:
        return cls(
            np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden)
        )

    @classmethod
    def initialise(cls, n_visible: int, n_hidden: int, rng: Rng) -> RbmParams:
        """Xavier-uniform weights and zero biases."""
        return cls(
            xavier_init(n_visible, n_hidden, rng),
            np.zeros(n_visible),
            np.zeros(n_hidden),
        )

    def zeros_like(self) -> RbmParams:
        return RbmParams.zeros(self.n_visible, self.n_hidden)

    def __add__(self, other: RbmParams) -> RbmParams:
        return RbmParams(
            self.weights + other.weights,
            self.visible_bias + other.visible_bias,
            self.hidden_bias + other.hidden_bias,
        )

    def scaled(self, factor: float) -> RbmParams:
        return RbmParams(
            factor * self.weights,
            factor * self.visible_bias,
            factor * self.hidden_bias,
        )

    def flat(self) -> Matrix:
        """All parameters as one vector (weights, visible, hidden)."""
        return np.concatenate(
            [self.weights.ravel(), self.visible_bias, self.hidden_bias]
        )

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}/weights": self.weights,
            f"{prefix}/visible_bias": self.visible_bias,
            f"{prefix}/hidden_bias": self.hidden_bias,
        }

    @classmethod
    def from_arrays(cls, prefix: str, arrays: dict[str, Any]) -> RbmParams:
        return cls(
            np.asarray(arrays[f"{prefix}/weights"], dtype=np.float64),
            np.asarray(arrays[f"{prefix}/visible_bias"], dtype=np.float64),
            np.asarray(arrays[f"{prefix}/hidden_bias"], dtype=np.float64),
        )

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, RbmParams):
            return False
        return (
            np.array_equal(self.weights, other.weights)
            and np.array_equal(self.visible_bias, other.visible_bias)
            and np.array_equal(self.hidden_bias, other.hidden_bias)
        )


@dataclass(frozen=True)
class CdConfig:
    """Contrastive Divergence hyper-parameters.

    Defaults are the pre-training column of the reference model design:
    10 epochs, learning rate 0.1, batch size 64, momentum 0.9, one Gibbs step.

    Raises:
        ConfigError: a value is out of range.
    """

    k: int = 1
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 10

    def __post_init__(self) -> None:
        if self.k < 1:
            raise exceptions.ConfigError(f"Gibbs steps must be >= 1, got {self.k}")
        if not self.learning_rate > 0:
            raise exceptions.ConfigError(
                f"Learning rate must be positive, got {self.learning_rate}"
            )
        if not 0.0 <= self.momentum < 1.0:
            raise exceptions.ConfigError(
                f"Momentum must lie in [0, 1), got {self.momentum}"
            )
        if self.batch_size < 1:
            raise exceptions.ConfigError(
                f"Batch size must be >= 1, got {self.batch_size}"
            )
        if self.epochs < 0:
            raise exceptions.ConfigError(f"Epochs must be >= 0, got {self.epochs}")


class GibbsChain(NamedTuple):
    h0_probs: Matrix
    vk_probs: Matrix
    hk_probs: Matrix
    # p(v | h_0), the one-step reconstruction.
    v1_probs: Matrix


def _check_width(params: RbmParams, x: Matrix, expected: int, side: str) -> Matrix:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != expected:
        raise exceptions.ShapeError(
            f"{side} vector has {x.shape[-1]} units, RBM expects {expected}"
        )
    return x


def energy(params: RbmParams, v: Matrix, h: Matrix) -> float:
    """Energy of the joint configuration (v, h).

    ``E(v, h) = -b.v - c.h - v.W.h``
    """
    v = _check_width(params, v, params.n_visible, "Visible")
    h = _check_width(params, h, params.n_hidden, "Hidden")
    if v.ndim != 1 or h.ndim != 1:
        raise exceptions.ShapeError("energy expects a single (v, h) pair")
    return float(
        -(params.visible_bias @ v)
        - (params.hidden_bias @ h)
        - (v @ params.weights @ h)
    )


def free_energy(params: RbmParams, v: Matrix) -> Matrix:
    """Free energy ``-log sum_h exp(-E(v, h))`` of each visible row."""
    v = _check_width(params, v, params.n_visible, "Visible")
    activation = params.hidden_bias + v @ params.weights
    return -(v @ params.visible_bias) - np.sum(np.logaddexp(0.0, activation), axis=-1)


def binary_states(n: int) -> Matrix:
    """All ``2**n`` binary vectors of length n, in lexicographic order."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)), dtype=np.float64)


def _check_enumerable(params: RbmParams) -> None:
    if params.n_visible + params.n_hidden > ENUMERATION_LIMIT:
        raise exceptions.CapacityError(
            f"Exact enumeration needs n_visible + n_hidden <= {ENUMERATION_LIMIT}, "
            f"got {params.n_visible} + {params.n_hidden}"
        )


def _negative_energies(params: RbmParams) -> tuple[Matrix, Matrix, Matrix]:
    """-E for every (v, h) pair, as a ``2**nv x 2**nh`` table."""
    _check_enumerable(params)
    vs = binary_states(params.n_visible)
    hs = binary_states(params.n_hidden)
    table = (
        (vs @ params.visible_bias)[:, None]
        + (hs @ params.hidden_bias)[None, :]
        + vs @ params.weights @ hs.T
    )
    return vs, hs, table


def log_partition_function(params: RbmParams) -> float:
    """log Z by exhaustive enumeration (see ``ENUMERATION_LIMIT``)."""
    _, _, table = _negative_energies(params)
    return float(log_sum_exp(table))


def partition_function(params: RbmParams) -> float:
    """Z, the sum of exp(-E) over all binary (v, h) pairs.

    Raises:
        CapacityError: the machine is too large to enumerate.
    """
    return float(np.exp(log_partition_function(params)))


def joint_probability(params: RbmParams, v: Matrix, h: Matrix) -> float:
    """p(v, h) = exp(-E(v, h)) / Z."""
    return float(np.exp(-energy(params, v, h) - log_partition_function(params)))


def marginal_v(params: RbmParams, v: Matrix) -> float:
    """p(v), marginalising the hidden units out by enumeration."""
    v = _check_width(params, v, params.n_visible, "Visible")
    if v.ndim != 1:
        raise exceptions.ShapeError("marginal_v expects a single visible vector")
    log_z = log_partition_function(params)
    return float(np.exp(-free_energy(params, v) - log_z))


def prop_up(params: RbmParams, v: Matrix) -> Matrix:
    """p(h_j = 1 | v) for every hidden unit; v may be a row or a batch."""
    v = _check_width(params, v, params.n_visible, "Visible")
    return sigmoid(params.hidden_bias + v @ params.weights)


def prop_down(params: RbmParams, h: Matrix) -> Matrix:
    """p(v_i = 1 | h) for every visible unit; h may be a row or a batch."""
    h = _check_width(params, h, params.n_hidden, "Hidden")
    return sigmoid(params.visible_bias + h @ params.weights.T)


def gibbs_chain(params: RbmParams, v0: Matrix, k: int, rng: Rng) -> GibbsChain:
    """Run k alternating Gibbs steps starting from the batch 'v0'.

    Hidden states are sampled binary at every step and intermediate visible
    states are sampled too.  The last step is returned as probabilities:
    ``vk_probs = p(v | h_(k-1))`` and ``hk_probs = p(h | vk_probs)``.
    ``v1_probs`` keeps the first reconstruction ``p(v | h_0)``.

    Raises:
        DomainError: k < 1.
        ShapeError: v0 does not match the visible layer.
    """
    if k < 1:
        raise exceptions.DomainError(f"Gibbs chain needs k >= 1, got {k}")

    h0_probs = prop_up(params, v0)
    h_probs = h0_probs
    v_probs = np.asarray(v0, dtype=np.float64)
    v1_probs = v_probs
    for step in range(k):
        h_states = bernoulli_sample(h_probs, rng)
        v_probs = prop_down(params, h_states)
        if step == 0:
            v1_probs = v_probs
        if step < k - 1:
            h_probs = prop_up(params, bernoulli_sample(v_probs, rng))

    return GibbsChain(h0_probs, v_probs, prop_up(params, v_probs), v1_probs)


def sample_chain(
    params: RbmParams,
    n_chains: int,
    n_steps: int,
    rng: Rng,
    burn_in: int = 100,
) -> Matrix:
    """Sample binary visible states from parallel Gibbs chains.

    Runs ``n_chains`` independent chains from uniformly random visible
    states and returns the ``n_chains * n_steps`` visible samples drawn
    after ``burn_in`` steps.  Their empirical distribution approaches p(v).
    """
    v = bernoulli_sample(np.full((n_chains, params.n_visible), 0.5), rng)
    samples = []
    for step in range(burn_in + n_steps):
        h = bernoulli_sample(prop_up(params, v), rng)
        v = bernoulli_sample(prop_down(params, h), rng)
        if step >= burn_in:
            samples.append(v)
    return np.concatenate(samples) if samples else np.empty((0, params.n_visible))


def exact_gradient(params: RbmParams, data: Matrix) -> RbmParams:
    """Exact gradient of the mean log-likelihood of 'data'.

    The data term uses ``p(h | v)`` for each row, the model term is the exact
    expectation under p(v, h), obtained by enumeration.

    Raises:
        CapacityError: the machine is too large to enumerate.
    """
    data = _check_width(params, data, params.n_visible, "Visible")
    vs, hs, table = _negative_energies(params)
    joint = np.exp(table - log_sum_exp(table))

    h_data = prop_up(params, data)
    n = data.shape[0]
    return RbmParams(
        data.T @ h_data / n - vs.T @ joint @ hs,
        data.mean(axis=0) - joint.sum(axis=1) @ vs,
        h_data.mean(axis=0) - joint.sum(axis=0) @ hs,
    )


def cd_update(
    params: RbmParams,
    batch: Matrix,
    cfg: CdConfig,
    velocity: RbmParams,
    rng: Rng,
) -> tuple[RbmParams, RbmParams]:
    """One CD-k step on a mini-batch.

    ``delta W = lr * (v0' h0 - vk' hk) / n`` with hidden probabilities on
    both sides; biases use the mean activation differences.  Momentum folds
    into the velocity, ``velocity <- m * velocity + delta``, and applies to
    weights and biases alike.

    Returns:
        The updated parameters and velocity.

    Raises:
        DomainError: empty batch or values outside [0, 1].
    """
    params, velocity, _ = _cd_step(params, batch, cfg, velocity, rng)
    return params, velocity


def _cd_step(
    params: RbmParams,
    batch: Matrix,
    cfg: CdConfig,
    velocity: RbmParams,
    rng: Rng,
) -> tuple[RbmParams, RbmParams, GibbsChain]:
    batch = _check_width(params, batch, params.n_visible, "Visible")
    if batch.ndim != 2 or batch.shape[0] == 0:  # noqa: PLR2004
        raise exceptions.DomainError("cd_update needs a non-empty batch")

    chain = gibbs_chain(params, batch, cfg.k, rng)
    n = batch.shape[0]
    delta = RbmParams(
        (batch.T @ chain.h0_probs - chain.vk_probs.T @ chain.hk_probs) / n,
        np.mean(batch - chain.vk_probs, axis=0),
        np.mean(chain.h0_probs - chain.hk_probs, axis=0),
    ).scaled(cfg.learning_rate)

    velocity = velocity.scaled(cfg.momentum) + delta
    return params + velocity, velocity, chain


def _check_unit_range(data: Matrix) -> None:
    if data.size and (data.min() < 0.0 or data.max() > 1.0):
        raise exceptions.DomainError(
            "RBM inputs must lie in [0, 1]; scale features before pretraining"
        )


def pretrain(
    params: RbmParams, data: Matrix, cfg: CdConfig, rng: Rng
) -> tuple[RbmParams, list[float]]:
    """Train an RBM with CD-k over shuffled mini-batches.

    Epoch e shuffles with ``rng.child("epoch-e/shuffle")`` and samples with
    ``rng.child("epoch-e/gibbs")``, so each epoch's randomness depends only
    on the seed and the epoch index.  A final partial batch is used as is.

    Returns:
        The trained parameters and, per epoch, the mean squared error
        between each batch and its one-step reconstruction ``v1_probs``.

    Raises:
        ShapeError: data width does not match the visible layer.
        DomainError: data outside [0, 1].
    """
    data = _check_width(params, data, params.n_visible, "Visible")
    _check_unit_range(data)

    velocity = params.zeros_like()
    errors: list[float] = []
    n = data.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.child(f"epoch-{epoch}/shuffle").permutation(n)
        gibbs_rng = rng.child(f"epoch-{epoch}/gibbs")
        squared_error = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = data[order[start : start + cfg.batch_size]]
            params, velocity, chain = _cd_step(params, batch, cfg, velocity, gibbs_rng)
            # Measured on the chain that produced this update.
            squared_error += float(np.sum((batch - chain.v1_probs) ** 2))

        errors.append(squared_error / max(data.size, 1))
        logger.info(
            "RBM %dx%d epoch %d/%d reconstruction error %.6f",
            params.n_visible,
            params.n_hidden,
            epoch + 1,
            cfg.epochs,
            errors[-1],
        )

    return params, errors
