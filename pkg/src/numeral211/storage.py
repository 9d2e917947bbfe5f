"""Small framed binary container: magic, version, JSON header, named arrays.

Byte-for-byte deterministic for identical inputs (sorted JSON keys,
arrays written in sorted name order, C layout), which is what makes
checkpoint/abstraction files comparable across runs.
"""

from __future__ import annotations

import json
import struct

import numpy as np


def write_container(path, magic: bytes, version: int, meta: dict, arrays: dict) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    header = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<IQ", version, len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name])
            name_b = name.encode()
            dtype_b = arr.dtype.str.encode()
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<H", len(dtype_b)))
            f.write(dtype_b)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())


def read_container(path, magic: bytes, max_version: int) -> tuple[int, dict, dict]:
    with open(path, "rb") as f:
        if f.read(8) != magic:
            raise ValueError(f"{path}: wrong file type")
        version, hlen = struct.unpack("<IQ", f.read(12))
        if version > max_version:
            raise ValueError(f"{path}: unsupported version {version}")
        meta = json.loads(f.read(hlen).decode())
        (count,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode()
            (dlen,) = struct.unpack("<H", f.read(2))
            dtype = np.dtype(f.read(dlen).decode())
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
            n_bytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
            arrays[name] = np.frombuffer(f.read(n_bytes), dtype=dtype).reshape(shape)
    return version, meta, arrays
