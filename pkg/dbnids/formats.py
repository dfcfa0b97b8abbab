"""
<Program Name>
  formats.py

<Purpose>
  Implements the canonical JSON encoder used for every human-readable header
  and report record, and the checksummed binary container that holds splits,
  pipeline artifacts and model bundles.

  Container layout (all integers little-endian):

    MAGIC               8 bytes
    format version      u32
    header length       u32
    header              canonical JSON, UTF-8
    payload             raw array bytes, in header order
    checksum            sha256 over everything above, 32 bytes
"""

from __future__ import annotations

import json
import logging
import math
import struct
from typing import Any, Callable, Optional, Union

import numpy as np

from dbnids import exceptions
from dbnids.checksum import DIGEST_SIZE, digest_bytes

logger = logging.getLogger(__name__)

MAGIC = b"\x89DBNIDS\n"
FORMAT_VERSION = 1
CHECKSUM_SIZE = DIGEST_SIZE
SUPPORTED_DTYPES = ("<f4", "<f8", "<i8")

_PREAMBLE = struct.Struct("<8sII")


def _canonical_string_encoder(string: str) -> str:
    """Quote 'string', escaping only quote and backslash."""
    return '"{}"'.format(string.replace("\\", "\\\\").replace('"', '\\"'))


def _encode_canonical(object: Any, output_function: Callable) -> None:
    if isinstance(object, str):
        output_function(_canonical_string_encoder(object))
    elif object is True or object is np.True_:
        output_function("true")
    elif object is False or object is np.False_:
        output_function("false")
    elif object is None:
        output_function("null")
    elif isinstance(object, (int, np.integer)):
        output_function(str(int(object)))
    elif isinstance(object, (float, np.floating)):
        value = float(object)
        if not math.isfinite(value):
            raise exceptions.FormatError("I cannot encode non-finite " + repr(value))
        # repr is the shortest string that round-trips to the same double.
        output_function(repr(value))
    elif isinstance(object, (tuple, list)):
        output_function("[")
        if len(object):
            for item in object[:-1]:
                _encode_canonical(item, output_function)
                output_function(",")
            _encode_canonical(object[-1], output_function)
        output_function("]")
    elif isinstance(object, dict):
        output_function("{")
        if len(object):
            items = sorted(object.items())
            for key, value in items[:-1]:
                output_function(_canonical_string_encoder(key))
                output_function(":")
                _encode_canonical(value, output_function)
                output_function(",")
            key, value = items[-1]
            output_function(_canonical_string_encoder(key))
            output_function(":")
            _encode_canonical(value, output_function)
        output_function("}")
    else:
        raise exceptions.FormatError("I cannot encode " + repr(object))


def encode_canonical(
    object: Any,
    output_function: Optional[Callable] = None,
) -> Union[str, None]:
    """
    <Purpose>
      Encode 'object' so that it always has the same string form independent
      of dict ordering: keys are lexically sorted, there is no whitespace,
      only quote and backslash get escaped, and floats are written with
      their shortest round-trip representation.  NaN and infinities are
      refused.  Identical objects therefore always produce identical bytes,
      which keeps persisted artifacts byte-reproducible.

      >>> encode_canonical({"x" : 3, "y" : 0.5})
      '{"x":3,"y":0.5}'
      >>> encode_canonical([1, 2, 3])
      '[1,2,3]'

    <Arguments>
      object:
        The object to be encoded.

      output_function:
        The result will be passed as arguments to 'output_function'
        (e.g., output_function('result')).

    <Exceptions>
      dbnids.exceptions.FormatError, if 'object' cannot be encoded.

    <Returns>
      A string representing 'object' in canonical form, or None if
      'output_function' was given.
    """
    result: Union[None, list] = None
    if output_function is None:
        result = []
        output_function = result.append

    try:
        _encode_canonical(object, output_function)

    except (TypeError, exceptions.FormatError) as e:
        message: str = "Could not encode " + repr(object) + ": " + str(e)
        raise exceptions.FormatError(message)

    if result is not None:
        return "".join(result)
    return None


def encode_container(
    kind: str, metadata: dict[str, Any], arrays: dict[str, np.ndarray]
) -> bytes:
    """Serialize 'metadata' and named 'arrays' into a checksummed container.

    Arrays are written in name order.  Each array keeps its own dtype, which
    must be one of ``SUPPORTED_DTYPES`` after conversion to little-endian.

    Raises:
        FormatError: unsupported dtype or metadata that cannot be encoded.
    """
    manifest = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name])
        dtype = array.dtype.newbyteorder("<").str
        if dtype not in SUPPORTED_DTYPES:
            raise exceptions.FormatError(
                f"Array {name!r} has unsupported dtype {array.dtype}"
            )
        raw = array.astype(dtype, copy=False).tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)

    header = encode_canonical(
        {"kind": kind, "metadata": metadata, "arrays": manifest}
    )
    assert header is not None
    header_bytes = header.encode("utf-8")

    body = (
        _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes))
        + header_bytes
        + b"".join(chunks)
    )
    return body + digest_bytes(body)


def decode_container(
    data: bytes, expected_kind: str | None = None
) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Verify and decode a container produced by ``encode_container``.

    The checksum is verified before any field is interpreted.

    Returns:
        The metadata dict and a dict of freshly allocated arrays.

    Raises:
        FormatError: truncated data, checksum mismatch, bad magic, version
            mismatch, unexpected kind or inconsistent array manifest.
    """
    if len(data) < _PREAMBLE.size + CHECKSUM_SIZE:
        raise exceptions.FormatError("Container is truncated")

    body, checksum = data[:-CHECKSUM_SIZE], data[-CHECKSUM_SIZE:]
    if digest_bytes(body) != checksum:
        raise exceptions.FormatError("Container checksum mismatch")

    magic, version, header_length = _PREAMBLE.unpack_from(body)
    if magic != MAGIC:
        raise exceptions.FormatError("Not a dbnids container (bad magic)")
    if version != FORMAT_VERSION:
        raise exceptions.FormatError(
            f"Unsupported container version {version}, expected {FORMAT_VERSION}"
        )

    header_end = _PREAMBLE.size + header_length
    try:
        header = json.loads(body[_PREAMBLE.size : header_end].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise exceptions.FormatError(f"Unreadable container header: {e}")

    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise exceptions.FormatError(
            f"Expected a {expected_kind!r} container, found {kind!r}"
        )

    payload = body[header_end:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        if entry["dtype"] not in SUPPORTED_DTYPES:
            raise exceptions.FormatError(f"Unsupported dtype {entry['dtype']!r}")
        start, stop = entry["offset"], entry["offset"] + entry["nbytes"]
        if stop > len(payload):
            raise exceptions.FormatError(f"Array {entry['name']!r} is truncated")
        array = np.frombuffer(payload[start:stop], dtype=entry["dtype"])
        arrays[entry["name"]] = array.reshape(entry["shape"]).copy()

    return header["metadata"], arrays


def encode_records(records: list[dict[str, Any]]) -> bytes:
    """Encode records as canonical JSON, one record per line."""
    lines = [encode_canonical(record) for record in records]
    return ("\n".join(line for line in lines if line is not None) + "\n").encode(
        "utf-8"
    )
