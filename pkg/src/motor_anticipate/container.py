"""Minimal binary container for named arrays plus a JSON metadata block.

Layout (all integers little-endian):

    magic      4 bytes
    version    uint32
    meta_len   uint32
    meta       UTF-8 JSON, meta_len bytes
    n_arrays   uint32
    per array:
        name_len   uint16
        name       UTF-8, name_len bytes
        dtype      uint8  (0=float32, 1=float64, 2=int64, 3=uint8)
        ndim       uint8
        dims       uint32 * ndim
        data       raw little-endian values

The same scheme backs clip files and parameter checkpoints (different magic).
"""

from __future__ import annotations

import json
import os
import struct
from typing import Dict, Tuple

import numpy as np

CLIP_MAGIC = b"MACL"
CKPT_MAGIC = b"MACK"
CLIP_VERSION = 1
CKPT_VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i8"): 2,
    np.dtype("u1"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class ContainerError(ValueError):
    """Raised on malformed or mismatching container files."""


def write_container(path, magic: bytes, version: int, meta: dict,
                    arrays: Dict[str, np.ndarray]) -> None:
    meta_bytes = json.dumps(meta).encode("utf-8")
    chunks = [magic, struct.pack("<I", version),
              struct.pack("<I", len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        shape = np.shape(arr)
        # ascontiguousarray promotes 0-d inputs to 1-d; keep the true shape
        arr = np.ascontiguousarray(arr).reshape(shape)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        arr = arr.astype(dt, copy=False)
        if arr.dtype not in _DTYPE_CODES:
            raise ContainerError(f"unsupported dtype {arr.dtype} for array {name!r}")
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    os.replace(tmp, path)


def read_container(path, magic: bytes, version: int) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        buf = f.read()
    try:
        return _parse(buf, magic, version)
    except struct.error as exc:
        raise ContainerError(f"corrupt clip: truncated container {path}") from exc


def _parse(buf: bytes, magic: bytes, version: int):
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(buf):
            raise ContainerError("corrupt clip: truncated container")
        out = buf[off:off + n]
        off += n
        return out

    if take(4) != magic:
        raise ContainerError(f"corrupt clip: bad magic (expected {magic!r})")
    (found_version,) = struct.unpack("<I", take(4))
    if found_version != version:
        raise ContainerError(
            f"format_version mismatch: expected {version}, found {found_version}")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode("utf-8"))
    (n_arrays,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        code, ndim = struct.unpack("<BB", take(2))
        if code not in _CODE_DTYPES:
            raise ContainerError(f"unknown dtype code {code}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = _CODE_DTYPES[code]
        nbytes = int(np.prod(dims)) * dtype.itemsize if ndim else dtype.itemsize
        data = take(nbytes)
        arrays[name] = np.frombuffer(data, dtype=dtype).reshape(dims).copy()
    return meta, arrays
