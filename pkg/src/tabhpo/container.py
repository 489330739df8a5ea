"""Versioned binary container: JSON header followed by raw little-endian arrays.

Layout::

    b"TABHPO\\x00\\x01"          8-byte magic (last byte = format version)
    uint64 LE                     header length in bytes
    header                        UTF-8 JSON
    payload                       arrays, each starting on an 8-byte boundary

The header carries ``kind``, free-form ``meta`` and an ``arrays`` table of
``{name, dtype, shape, offset, nbytes}`` with offsets relative to the payload
start.  Only numeric and boolean dtypes are stored.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1
MAGIC = b"TABHPO\x00" + bytes([FORMAT_VERSION])


def _le(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.kind not in "biuf":
        raise TypeError(f"cannot store dtype {arr.dtype} in a container")
    return arr.astype(arr.dtype.newbyteorder("<"), copy=False)


def dumps(kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    table, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = _le(np.asarray(arr))
        raw = a.tobytes()
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        pad = (-len(raw)) % 8
        chunks.append(raw + b"\x00" * pad)
        offset += len(raw) + pad
    header = json.dumps({"kind": kind, "format_version": FORMAT_VERSION, "meta": meta, "arrays": table},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def loads(blob: bytes, expect_kind: str | None = None) -> tuple[str, dict, dict[str, np.ndarray]]:
    if blob[:7] != MAGIC[:7]:
        raise DataError("not a tabhpo container (bad magic)")
    if blob[7] != FORMAT_VERSION:
        raise DataError(f"unsupported container version {blob[7]}")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    if expect_kind is not None and header["kind"] != expect_kind:
        raise DataError(f"container holds {header['kind']!r}, expected {expect_kind!r}")
    base = 16 + hlen
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        buf = blob[start:start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return header["kind"], header["meta"], arrays


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, dumps(kind, meta, arrays))


def load(path, expect_kind: str | None = None):
    return loads(Path(path).read_bytes(), expect_kind)
