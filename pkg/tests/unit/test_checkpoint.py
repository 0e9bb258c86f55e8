import struct

import numpy as np
import pytest

from memlab import CheckpointError
from memlab.checkpoint import (
    HEADER,
    CheckpointWriter,
    decode_state,
    encode_state,
    read_checkpoint,
    read_data,
    write_checkpoint,
    write_data,
)
from memlab.shortpulse import PulseProfile, direct_data
from memlab.solver import FieldState, GridSpec, evolve, radial_grid


def sample_state():
    grid = radial_grid(3, 128, 1.5)
    rng = np.random.default_rng(7)
    return FieldState(grid, 1.25, rng.normal(size=128) * 1e-3, rng.normal(size=128) * 1e-3, 0.1, 42)


def test_round_trip_is_bit_exact():
    state = sample_state()
    payload = encode_state(state)
    assert len(payload) == HEADER.size + 16 * 128 + 32
    again = decode_state(payload)
    assert again.grid == state.grid
    assert again.t == state.t and again.step == 42 and again.delta == 0.1
    assert again.phi.tobytes() == state.phi.tobytes()
    assert again.psi.tobytes() == state.psi.tobytes()
    assert encode_state(again) == payload


def test_header_layout():
    payload = encode_state(sample_state())
    magic, version, mode, n, delta, x_min, x_max, N, t, step = struct.unpack_from("<4sIBBdddIdQ", payload)
    assert (magic, version, mode, n, N, step) == (b"MEMB", 1, 1, 3, 128, 42)
    assert (delta, x_min, t) == (0.1, 0.0, 1.25)


def test_bad_magic():
    payload = bytearray(encode_state(sample_state()))
    payload[:4] = b"NOPE"
    with pytest.raises(CheckpointError, match="magic"):
        decode_state(bytes(payload))


def test_version_mismatch():
    payload = bytearray(encode_state(sample_state()))
    struct.pack_into("<I", payload, 4, 2)
    with pytest.raises(CheckpointError, match="version 2"):
        decode_state(bytes(payload))


def test_checksum_mismatch():
    payload = bytearray(encode_state(sample_state()))
    payload[HEADER.size + 8] ^= 0x01
    with pytest.raises(CheckpointError, match="checksum"):
        decode_state(bytes(payload))


def test_truncated():
    payload = encode_state(sample_state())
    with pytest.raises(CheckpointError):
        decode_state(payload[:10])
    with pytest.raises(CheckpointError, match="announces"):
        decode_state(payload[:-8])


def test_files(tmp_path):
    state = sample_state()
    path = write_checkpoint(tmp_path / "nested" / "state.memb", state)
    assert read_checkpoint(path).phi.tobytes() == state.phi.tobytes()
    with pytest.raises(CheckpointError, match="not found"):
        read_checkpoint(tmp_path / "missing.memb")
    # evolution checkpoints are not Cauchy data
    with pytest.raises(CheckpointError):
        read_data(path)


def test_cauchy_data_file(tmp_path):
    grid = radial_grid(3, 256, 1.0)
    data = direct_data(0.1, PulseProfile(), grid)
    state = read_data(write_data(tmp_path / "data.memb", data))
    assert state.t == 1.0 and state.step == 0
    np.testing.assert_array_equal(state.phi, data.phi0)
    np.testing.assert_array_equal(state.psi, data.phi1)


def test_writer_stride(tmp_path):
    grid = GridSpec("planar", 1, -2.0, 2.0, 64)
    x = grid.x
    state = FieldState(grid, 0.0, 0.01 * np.exp(-(x**2)), np.zeros(64))
    writer = CheckpointWriter(tmp_path, stride=2)
    final = evolve(state, 0.5, callbacks=[writer])
    written = sorted(p.name for p in tmp_path.iterdir())
    assert written == [writer.path_for(s).name for s in range(2, final.step + 1, 2)]
