"""
<Program Name>
  checksum.py

<Purpose>
  sha256 digests for persisted artifacts.  Container trailers, the split
  checksums reported by 'dbnids sweep' and the stable integer keys that name
  random streams all come from here.
"""

from __future__ import annotations

import hashlib
from typing import Any

from dbnids.storage import FilesystemBackend, StorageBackendInterface

DEFAULT_CHUNK_SIZE = 4096
DIGEST_SIZE = 32


def digest() -> Any:
    """Return a new sha256 digest object."""
    return hashlib.sha256()


def digest_bytes(data: bytes) -> bytes:
    """Return the raw sha256 digest of 'data'."""
    return hashlib.sha256(data).digest()


def digest_filename(
    filename: str, storage_backend: StorageBackendInterface | None = None
) -> bytes:
    """
    <Purpose>
      Return the raw sha256 digest of the file at 'filename', read in
      DEFAULT_CHUNK_SIZE chunks through 'storage_backend'.  When no backend
      is passed a FilesystemBackend is used.

    <Exceptions>
      dbnids.exceptions.StorageError, if the file cannot be opened.

    <Returns>
      The 32-byte digest, equal to ``digest_bytes`` of the file contents.
    """
    if storage_backend is None:
        storage_backend = FilesystemBackend()

    digest_object = digest()
    with storage_backend.get(filename) as file_object:
        for chunk in iter(lambda: file_object.read(DEFAULT_CHUNK_SIZE), b""):
            digest_object.update(chunk)
    return digest_object.digest()


def stable_key(label: str) -> int:
    """Return a 64-bit integer derived from the sha256 of 'label'.

    Unlike the builtin ``hash()`` the result does not depend on the
    interpreter's hash seed, so it can name reproducible random streams.
    """
    return int.from_bytes(digest_bytes(label.encode("utf-8"))[:8], "little")
