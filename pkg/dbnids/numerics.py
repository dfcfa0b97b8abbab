"""Dense numeric substrate: seeded random streams, activations, initialisers.

Matrices are plain ``numpy`` float64 arrays.  Every function that consumes
randomness takes an ``Rng`` and is a pure function of its inputs and the
stream's seed path.
"""

from __future__ import annotations

import logging
from typing import Union

import numpy as np
import numpy.typing as npt

from dbnids import exceptions
from dbnids.checksum import stable_key

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]
Labels = npt.NDArray[np.int64]
Shape = Union[int, tuple[int, ...]]

_MAX_SEED = 2**64


class Rng:
    """Splittable, counter-based random stream.

    Backed by ``numpy.random.Philox`` seeded from a ``SeedSequence``.  A
    child stream is addressed by the parent's seed path plus a label, so
    ``rng.child("epoch-3")`` yields the same numbers no matter how much the
    parent or any sibling has already drawn.

    Args:
        seed: Unsigned 64-bit experiment seed.
        path: Spawn key identifying the stream below ``seed``.

    Raises:
        DomainError: ``seed`` outside [0, 2**64).
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < _MAX_SEED:
            raise exceptions.DomainError(f"Seed {seed} is not an unsigned 64-bit int")
        self.seed = int(seed)
        self.path = path
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=path)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"

    def child(self, label: str) -> Rng:
        """Return the independent stream named 'label' below this one."""
        return Rng(self.seed, self.path + (stable_key(label),))

    def random(self, shape: Shape) -> Matrix:
        return self.generator.random(shape)

    def uniform(self, low: float, high: float, shape: Shape) -> Matrix:
        return self.generator.uniform(low, high, shape)

    def integers(self, low: int, high: int, shape: Shape) -> npt.NDArray[np.int64]:
        return self.generator.integers(low, high, shape)

    def normal(self, loc: float, scale: float, shape: Shape) -> Matrix:
        return self.generator.normal(loc, scale, shape)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        return self.generator.permutation(n)

    def choice(
        self,
        n: int,
        size: int,
        replace: bool = True,
        p: npt.NDArray[np.float64] | None = None,
    ) -> npt.NDArray[np.int64]:
        return self.generator.choice(n, size=size, replace=replace, p=p)


def _ensure_finite(result: Matrix, operation: str) -> Matrix:
    if not np.all(np.isfinite(result)):
        raise exceptions.DomainError(f"{operation} produced non-finite values")
    return result


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Return the matrix product ``a @ b``.

    Raises:
        ShapeError: inner dimensions differ or an operand is not 2-d.
        DomainError: the product overflowed.
    """
    if a.ndim != 2 or b.ndim != 2:  # noqa: PLR2004
        raise exceptions.ShapeError(
            f"matmul expects 2-d operands, got {a.ndim}-d and {b.ndim}-d"
        )
    if a.shape[1] != b.shape[0]:
        raise exceptions.ShapeError(
            f"Cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return _ensure_finite(a @ b, "matmul")


def sigmoid(x: Matrix) -> Matrix:
    """Elementwise logistic function, evaluated without overflow."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    # For negative inputs exp(x) cannot overflow.
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def softmax(logits: Matrix) -> Matrix:
    """Softmax over the last axis, with max subtraction.

    Accepts a single row vector or a batch of rows.
    """
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def log_softmax(logits: Matrix) -> Matrix:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def relu(x: Matrix) -> Matrix:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def log_sum_exp(values: Matrix, axis: int | None = None) -> Matrix:
    """Numerically stable ``log(sum(exp(values)))``."""
    values = np.asarray(values, dtype=np.float64)
    peak = np.max(values, axis=axis, keepdims=True)
    total = np.log(np.sum(np.exp(values - peak), axis=axis, keepdims=True)) + peak
    if axis is None:
        return total.reshape(())
    return np.squeeze(total, axis=axis)


def bernoulli_sample(probs: Matrix, rng: Rng) -> Matrix:
    """Draw independent {0, 1} samples with the given success probabilities.

    Raises:
        DomainError: a probability lies outside [0, 1].
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (
        not np.all(np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0
    ):
        raise exceptions.DomainError("Bernoulli probabilities must lie in [0, 1]")
    # uniform draws lie in [0, 1): p=0 never fires, p=1 always does.
    return (rng.random(probs.shape) < probs).astype(np.float64)


def xavier_init(rows: int, cols: int, rng: Rng) -> Matrix:
    """Glorot-uniform matrix: U(-l, l) with ``l = sqrt(6 / (rows + cols))``.

    Raises:
        DomainError: a dimension is smaller than 1.
    """
    if rows < 1 or cols < 1:
        raise exceptions.DomainError(f"Cannot initialise a {rows}x{cols} matrix")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))
