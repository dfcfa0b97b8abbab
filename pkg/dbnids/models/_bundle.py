"""
<Program Name>
  _bundle.py

<Purpose>
  A ModelBundle is everything needed to classify raw flow records again: the
  trained classifier, the fitted PipelineArtifact, the training
  configuration it was produced with and a snapshot of its metrics.

  Bundles are stored in the checksummed container of dbnids.formats.  Model
  parameters are stored as little-endian float32; pipeline arrays keep
  float64.  Save, load and save again produces identical bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from dbnids import exceptions
from dbnids.formats import decode_container, encode_container
from dbnids.models._model import Classifier
from dbnids.pipeline import PipelineArtifact
from dbnids.storage import FilesystemBackend, StorageBackendInterface

logger = logging.getLogger(__name__)

BUNDLE_KIND = "model-bundle"
BUNDLE_VERSION = 1

_MODEL_PREFIX = "model/"
_PIPELINE_PREFIX = "pipeline/"


@dataclass(eq=False)
class ModelBundle:
    """Trained classifier plus the preprocessing it expects.

    Attributes:
        model: The classifier.
        pipeline: The fitted preprocessing.
        train_config: Echo of the training configuration.
        metrics: Metrics snapshot taken at training time.
        history: Per-epoch training history records.
    """

    model: Classifier
    pipeline: PipelineArtifact
    train_config: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    history: list[dict[str, Any]] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        arrays = {
            _MODEL_PREFIX + name: np.asarray(array, dtype="<f4")
            for name, array in self.model.to_arrays().items()
        }
        arrays.update(self.pipeline.arrays(_PIPELINE_PREFIX))
        metadata = {
            "bundle_version": BUNDLE_VERSION,
            "model": self.model.architecture(),
            "pipeline": self.pipeline.metadata(),
            "train_config": self.train_config,
            "metrics": self.metrics,
            "history": self.history,
        }
        return encode_container(BUNDLE_KIND, metadata, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> ModelBundle:
        """
        <Purpose>
          Decode a bundle, verifying its checksum before anything else.

        <Exceptions>
          dbnids.exceptions.FormatError, if the data are corrupt, of another
          container kind or version, or describe an unknown model kind.

        <Returns>
          A ModelBundle.
        """
        metadata, arrays = decode_container(data, BUNDLE_KIND)
        version = metadata.get("bundle_version")
        if version != BUNDLE_VERSION:
            raise exceptions.FormatError(
                f"Unsupported bundle version {version}, expected {BUNDLE_VERSION}"
            )

        model_arrays = {
            name[len(_MODEL_PREFIX) :]: array
            for name, array in arrays.items()
            if name.startswith(_MODEL_PREFIX)
        }
        return cls(
            Classifier.from_arrays(metadata["model"], model_arrays),
            PipelineArtifact.from_parts(
                metadata["pipeline"], arrays, _PIPELINE_PREFIX
            ),
            metadata["train_config"],
            metadata["metrics"],
            metadata["history"],
        )

    def save(
        self, path: str, storage_backend: StorageBackendInterface | None = None
    ) -> None:
        if storage_backend is None:
            storage_backend = FilesystemBackend()
        storage_backend.put_bytes(self.to_bytes(), path)
        logger.info("Saved %s bundle to %s", self.model.KIND, path)

    @classmethod
    def load(
        cls, path: str, storage_backend: StorageBackendInterface | None = None
    ) -> ModelBundle:
        if storage_backend is None:
            storage_backend = FilesystemBackend()
        return cls.from_bytes(storage_backend.read_bytes(path))
