"""
<Program Name>
  storage.py

<Purpose>
  StorageBackendInterface, through which splits, pipeline artifacts, model
  bundles and reports are read and written, and its local filesystem
  implementation. Passing another backend redirects an experiment to other
  storage.
"""

from __future__ import annotations

import io
import logging
import os
import shutil
import tempfile
from abc import ABCMeta, abstractmethod
from collections.abc import Iterator
from contextlib import contextmanager
from typing import IO, BinaryIO

from dbnids import exceptions

logger = logging.getLogger(__name__)


class StorageBackendInterface(metaclass=ABCMeta):
    """
    <Purpose>
    Defines an interface for abstract storage operations which can be
    implemented for a variety of storage solutions, such as remote and local
    filesystems.
    """

    @abstractmethod
    @contextmanager
    def get(self, filepath: str) -> Iterator[BinaryIO]:
        """
        <Purpose>
          A context manager for 'with' statements that is used for retrieving
          files from a storage backend and cleans up the files upon exit.

            with storage_backend.get('/path/to/file') as file_object:
              # operations
            # file is now closed

        <Exceptions>
          dbnids.exceptions.StorageError, if the file does not exist or is
          not accessible.
        """
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def put(self, fileobj: IO, filepath: str) -> None:
        """
        <Purpose>
          Store a file-like object in the storage backend.  The file-like
          object is read from the beginning, not its current offset.

        <Exceptions>
          dbnids.exceptions.StorageError, if the file can not be stored.
        """
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def exists(self, filepath: str) -> bool:
        """Return whether a file exists at 'filepath'."""
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def create_folder(self, filepath: str) -> None:
        """
        <Purpose>
          Create a folder at filepath and ensure all intermediate components
          of the path exist.

        <Exceptions>
          dbnids.exceptions.StorageError, if the folder can not be created.
        """
        raise NotImplementedError  # pragma: no cover

    @abstractmethod
    def list_folder(self, filepath: str) -> list[str]:
        """
        <Purpose>
          List the names of the entries in the folder at 'filepath'.

        <Exceptions>
          dbnids.exceptions.StorageError, if the folder does not exist or is
          not accessible.
        """
        raise NotImplementedError  # pragma: no cover

    def read_bytes(self, filepath: str) -> bytes:
        """Return the full contents of the file at 'filepath'."""
        with self.get(filepath) as file_object:
            return file_object.read()

    def put_bytes(self, data: bytes, filepath: str) -> None:
        """Store 'data' at 'filepath', replacing any previous content."""
        self.put(io.BytesIO(data), filepath)


class FilesystemBackend(StorageBackendInterface):
    """
    <Purpose>
      StorageBackendInterface over the local filesystem. Files are written
      to a temporary sibling and renamed into place, so a reader sees either
      the previous artifact or the complete new one.
    """

    _instance = None

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = object.__new__(cls, *args, **kwargs)
        return cls._instance

    @contextmanager
    def get(self, filepath: str) -> Iterator[BinaryIO]:
        try:
            file_object = open(filepath, "rb")
        except OSError as e:
            raise exceptions.StorageError(f"Can't open {filepath}: {e.strerror}")
        with file_object:
            yield file_object

    def put(self, fileobj: IO, filepath: str) -> None:
        if not fileobj.closed:
            fileobj.seek(0)

        folder = os.path.dirname(filepath) or "."
        temp_path = None
        try:
            fd, temp_path = tempfile.mkstemp(
                prefix=f".{os.path.basename(filepath)}.", dir=folder
            )
            with os.fdopen(fd, "wb") as destination_file:
                shutil.copyfileobj(fileobj, destination_file)
                destination_file.flush()
                os.fsync(destination_file.fileno())
            os.replace(temp_path, filepath)
        except OSError as e:
            if temp_path is not None and os.path.exists(temp_path):
                os.remove(temp_path)
            raise exceptions.StorageError(
                f"Can't write file {filepath}: {e.strerror}"
            )

        logger.debug("Wrote %s", filepath)

    def exists(self, filepath: str) -> bool:
        return os.path.isfile(filepath)

    def create_folder(self, filepath: str) -> None:
        if not filepath:
            raise exceptions.StorageError(
                "Can't create a folder with an empty filepath!"
            )
        try:
            os.makedirs(filepath, exist_ok=True)
        except OSError as e:
            raise exceptions.StorageError(
                f"Can't create folder at {filepath}: {e.strerror}"
            )

    def list_folder(self, filepath: str) -> list[str]:
        try:
            return sorted(os.listdir(filepath))
        except OSError as e:
            raise exceptions.StorageError(
                f"Can't list folder at {filepath}: {e.strerror}"
            )
