"""Classifier interface"""

from __future__ import annotations

import logging
from abc import ABCMeta, abstractmethod
from typing import Any

import numpy as np

from dbnids import exceptions
from dbnids.numerics import Labels, Matrix

logger = logging.getLogger(__name__)

# NOTE Model dispatch table is defined here so it's usable by Classifier,
# but is populated in __init__.py (and can be appended by users).
MODEL_FOR_KIND: dict[str, type] = {}
"""Model dispatch table for ``Classifier.from_arrays()``

See ``dbnids.models.MODEL_FOR_KIND`` for default model kinds, and how to
register custom implementations.
"""


class Classifier(metaclass=ABCMeta):
    """Abstract trained classifier.

    Implementations are immutable after construction; training functions
    return new instances.  Concurrent inference is therefore safe.
    """

    KIND: str

    @abstractmethod
    def predict_proba(self, batch: Matrix) -> Matrix:
        """Class probabilities, one row per sample."""
        raise NotImplementedError

    def predict(self, batch: Matrix) -> Labels:
        """Most probable class per row; ties go to the lowest class index."""
        return np.argmax(self.predict_proba(batch), axis=1).astype(np.int64)

    @property
    @abstractmethod
    def n_classes(self) -> int:
        raise NotImplementedError

    @abstractmethod
    def architecture(self) -> dict[str, Any]:
        """JSON-serializable description, including ``"kind"``.

        Implementations must override this serialization helper.
        """
        raise NotImplementedError

    @abstractmethod
    def to_arrays(self) -> dict[str, np.ndarray]:
        """Named parameter arrays."""
        raise NotImplementedError

    @abstractmethod
    def narrowed(self) -> Classifier:
        """Copy whose parameters are rounded to float32 precision.

        Inference of the narrowed model equals inference of the same model
        after a save/load cycle, which stores float32.
        """
        raise NotImplementedError

    @classmethod
    @abstractmethod
    def from_arrays(
        cls, architecture: dict[str, Any], arrays: dict[str, np.ndarray]
    ) -> Classifier:
        """Creates a ``Classifier`` from ``architecture()`` and ``to_arrays()``
        output.

        Users should call ``Classifier.from_arrays()``: it dispatches to the
        actual subclass implementation based on ``MODEL_FOR_KIND``.

        Raises:
            FormatError: unknown kind or missing arrays.
        """
        kind = architecture.get("kind")
        if kind not in MODEL_FOR_KIND:
            raise exceptions.FormatError(f"Unsupported model kind {kind!r}")

        model_impl = MODEL_FOR_KIND[kind]
        try:
            return model_impl.from_arrays(architecture, arrays)  # type: ignore
        except KeyError as e:
            raise exceptions.FormatError(f"Model parameters lack {e}")


def narrow(array: np.ndarray) -> Matrix:
    """Round float64 values to the nearest float32 and widen them back."""
    return np.asarray(array, dtype=np.float32).astype(np.float64)
