"""Bit-exact binary container for tensors.

Layout (little-endian, no padding):

    magic   4 bytes  b"SERT"
    version 1 byte   = 1
    dtype   1 byte   = 1 (32-bit float)
    rank    1 byte
    dims    rank x uint32
    payload prod(dims) x float32, row-major

Values are stored as float32; writing rounds in-memory float64 values to
float32, so ``read(write(t)) == t`` holds bit-exactly for any tensor whose
values are float32-representable (everything that ever came from a file).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import TensorCorruptionError, TensorFormatError

MAGIC = b"SERT"
VERSION = 1
DTYPE_FLOAT32 = 1


def write_tensor(t: Tensor | np.ndarray, path) -> None:
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if data.ndim > 3:
        raise TensorFormatError(f"rank {data.ndim} > 3 is not supported")
    payload = np.ascontiguousarray(data, dtype="<f4")
    header = MAGIC + struct.pack("<BBB", VERSION, DTYPE_FLOAT32, data.ndim)
    header += struct.pack(f"<{data.ndim}I", *data.shape)
    Path(path).write_bytes(header + payload.tobytes())


def read_tensor(path) -> Tensor:
    raw = Path(path).read_bytes()
    if len(raw) < 7 or raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, dtype_code, rank = struct.unpack("<BBB", raw[4:7])
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_FLOAT32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype_code}")
    if rank > 3:
        raise TensorFormatError(f"{path}: rank {rank} > 3")
    dims_end = 7 + 4 * rank
    if len(raw) < dims_end:
        raise TensorCorruptionError(f"{path}: truncated header")
    dims = struct.unpack(f"<{rank}I", raw[7:dims_end])
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise TensorCorruptionError(
            f"{path}: payload has {len(payload)} bytes, dims {dims} need {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return Tensor(data.astype(np.float64))
