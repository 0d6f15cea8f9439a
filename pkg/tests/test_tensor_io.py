import numpy as np
import pytest

from egolift.rng import Rng
from egolift.tensor_io import ContainerError, read_tensor, write_tensor


def test_round_trip_float32(tmp_path):
    x = Rng(1).normal((3, 4, 5)).astype(np.float32)
    path = tmp_path / "t.bin"
    write_tensor(path, x)
    y = read_tensor(path)
    assert y.dtype == np.float32 and y.shape == x.shape
    assert (x == y).all()


def test_round_trip_float64(tmp_path):
    x = Rng(2).normal((7,))
    path = tmp_path / "t.bin"
    write_tensor(path, x)
    y = read_tensor(path)
    assert y.dtype == np.float64 and (x == y).all()


def test_corrupt_magic_names_the_file(tmp_path):
    path = tmp_path / "bad.bin"
    write_tensor(path, np.ones(3, dtype=np.float32))
    blob = path.read_bytes()
    path.write_bytes(b"NOPE" + blob[4:])
    with pytest.raises(ContainerError) as exc:
        read_tensor(path)
    assert "bad.bin" in str(exc.value)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "cut.bin"
    write_tensor(path, np.ones((4, 4), dtype=np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(ContainerError):
        read_tensor(path)


def test_version_mismatch_rejected(tmp_path):
    import struct
    path = tmp_path / "v9.bin"
    write_tensor(path, np.ones(2, dtype=np.float32))
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(ContainerError) as exc:
        read_tensor(path)
    assert "version" in str(exc.value)


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(ContainerError):
        write_tensor(tmp_path / "i.bin", np.ones(3, dtype=np.int32))
