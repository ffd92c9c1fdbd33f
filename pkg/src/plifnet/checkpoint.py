"""Versioned binary checkpoints with named array records.

Layout: magic ``PLCK``, u32 version, u32 JSON-meta length, meta bytes,
u32 record count, then per record: u16 name length, name, u8 dtype-string
length, dtype, u8 ndim, u32 dims, raw little-endian payload. Records are
sorted by name and the meta JSON uses sorted keys, so identical state
serializes to identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DataError

MAGIC = b"PLCK"
VERSION = 1


def save_checkpoint(path, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in sorted(arrays, key=lambda kv: kv[0]):
            arr = np.asarray(arr)
            dt = arr.dtype.newbyteorder("<")
            name_b = name.encode()
            dt_b = dt.str.encode()
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", len(dt_b)))
            f.write(dt_b)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (magic {raw[:4]!r})")
    version, meta_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    meta = json.loads(raw[off:off + meta_len].decode())
    off += meta_len
    (count,) = struct.unpack("<I", raw[off:off + 4])
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", raw[off:off + 2])
        off += 2
        name = raw[off:off + nlen].decode()
        off += nlen
        (dlen,) = struct.unpack("<B", raw[off:off + 1])
        off += 1
        dt = np.dtype(raw[off:off + dlen].decode())
        off += dlen
        (ndim,) = struct.unpack("<B", raw[off:off + 1])
        off += 1
        shape = struct.unpack(f"<{ndim}I", raw[off:off + 4 * ndim])
        off += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arrays[name] = np.frombuffer(raw, dtype=dt, count=int(np.prod(shape, dtype=np.int64)),
                                     offset=off).reshape(shape).copy()
        off += size
    return meta, arrays
