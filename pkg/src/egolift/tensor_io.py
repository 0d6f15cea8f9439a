"""Binary tensor container files.

Layout (all integers little-endian):

    magic   4 bytes  b"ETAP"
    version u32      format version, currently 1
    dtype   u32      1 = float32, 2 = float64
    rank    u32
    extents u32[rank]
    data    little-endian scalars, row-major

Round-trips are bitwise lossless; datasets and checkpoints are built on it.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"ETAP"
VERSION = 1

_CODE_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_KIND_TO_CODE = {"<f4": 1, "<f8": 2}


class ContainerError(IOError):
    """Malformed, truncated or unsupported tensor container file."""


def write_tensor(path, array) -> None:
    arr = np.ascontiguousarray(getattr(array, "data", array))
    if arr.dtype == np.float32:
        arr = arr.astype("<f4", copy=False)
    elif arr.dtype == np.float64:
        arr = arr.astype("<f8", copy=False)
    else:
        raise ContainerError(f"unsupported dtype {arr.dtype} for {path}")
    code = _KIND_TO_CODE[arr.dtype.str]
    header = MAGIC + struct.pack("<III", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r}, not a tensor container")
    if len(blob) < 16:
        raise ContainerError(f"{path}: truncated header")
    version, code, rank = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    if code not in _CODE_TO_DTYPE:
        raise ContainerError(f"{path}: unknown dtype code {code}")
    offset = 16
    if len(blob) < offset + 4 * rank:
        raise ContainerError(f"{path}: truncated extents")
    shape = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    dtype = _CODE_TO_DTYPE[code]
    count = int(np.prod(shape)) if rank else 1
    expected = offset + count * dtype.itemsize
    if len(blob) != expected:
        raise ContainerError(f"{path}: expected {expected} bytes, found {len(blob)}")
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="), copy=False)
