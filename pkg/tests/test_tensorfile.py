"""Binary tensor container: roundtrips and rejection of malformed files."""

import struct

import numpy as np
import pytest

from serhead.autodiff import Tensor
from serhead.errors import TensorCorruptionError, TensorFormatError
from serhead.tensorfile import read_tensor, write_tensor


def test_roundtrip_sequential(tmp_path):
    t = Tensor(np.arange(24.0, dtype=np.float32).reshape(2, 3, 4))
    path = tmp_path / "t.sert"
    write_tensor(t, path)
    back = read_tensor(path)
    assert back.shape == (2, 3, 4)
    np.testing.assert_array_equal(back.data, t.data)


def test_roundtrip_bit_exact_random_shapes(tmp_path):
    rng = np.random.default_rng(42)
    for i in range(50):
        rank = int(rng.integers(0, 4))
        shape = tuple(int(rng.integers(1, 7)) for _ in range(rank))
        values = rng.normal(size=shape).astype(np.float32)
        path = tmp_path / f"r{i}.sert"
        write_tensor(Tensor(values.astype(np.float64)), path)
        back = read_tensor(path).data
        assert back.shape == values.shape
        assert (back.astype(np.float32).tobytes() == values.tobytes())


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.sert"
    path.write_bytes(b"XXXX" + bytes([1, 1, 1]) + struct.pack("<I", 1) + b"\0\0\0\0")
    with pytest.raises(TensorFormatError):
        read_tensor(path)


def test_bad_version_and_dtype(tmp_path):
    base = struct.pack("<I", 1) + b"\0\0\0\0"
    v = tmp_path / "v.sert"
    v.write_bytes(b"SERT" + bytes([9, 1, 1]) + base)
    with pytest.raises(TensorFormatError):
        read_tensor(v)
    d = tmp_path / "d.sert"
    d.write_bytes(b"SERT" + bytes([1, 7, 1]) + base)
    with pytest.raises(TensorFormatError):
        read_tensor(d)


def test_truncated_payload(tmp_path):
    # header says [2, 2] (16 payload bytes) but only 12 follow
    path = tmp_path / "short.sert"
    path.write_bytes(b"SERT" + bytes([1, 1, 2]) + struct.pack("<2I", 2, 2) + b"\0" * 12)
    with pytest.raises(TensorCorruptionError):
        read_tensor(path)


def test_oversized_payload(tmp_path):
    path = tmp_path / "long.sert"
    path.write_bytes(b"SERT" + bytes([1, 1, 1]) + struct.pack("<I", 1) + b"\0" * 8)
    with pytest.raises(TensorCorruptionError):
        read_tensor(path)


def test_scalar_roundtrip(tmp_path):
    path = tmp_path / "s.sert"
    write_tensor(Tensor(3.5), path)
    back = read_tensor(path)
    assert back.shape == ()
    assert back.item() == 3.5
