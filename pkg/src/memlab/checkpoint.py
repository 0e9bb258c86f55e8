"""Binary checkpoints of evolution states.

Layout, little-endian::

    b"MEMB" | uint32 version | uint8 mode | uint8 n | f64 delta | f64 x_min | f64 x_max
    | uint32 N | f64 t | uint64 step | N x f64 phi | N x f64 psi | 32-byte SHA-256

The checksum covers every byte before it. Cauchy data files use the same
container with t = 1, step 0 and psi holding phi_1.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from memlab.solver import MODE_CODES, FieldState, GridSpec
from memlab.utils import CheckpointError, sha256_bytes

MAGIC = b"MEMB"
VERSION = 1
HEADER = struct.Struct("<4sIBBdddIdQ")
DIGEST_SIZE = 32
MODE_NAMES = {code: mode for mode, code in MODE_CODES.items()}


def encode_state(state):
    grid = state.grid
    header = HEADER.pack(
        MAGIC,
        VERSION,
        MODE_CODES[grid.mode],
        grid.n,
        float(state.delta),
        float(grid.x_min),
        float(grid.x_max),
        grid.N,
        float(state.t),
        state.step,
    )
    body = header + state.phi.astype("<f8").tobytes() + state.psi.astype("<f8").tobytes()
    return body + sha256_bytes(body)


def decode_state(payload):
    if len(payload) < HEADER.size + DIGEST_SIZE:
        raise CheckpointError(f"truncated checkpoint: {len(payload)} bytes")
    magic, version, mode, n, delta, x_min, x_max, N, t, step = HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise CheckpointError(f"not a memlab checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version}, this build reads version {VERSION}")
    if mode not in MODE_NAMES:
        raise CheckpointError(f"unknown mode code {mode}")
    expected = HEADER.size + 16 * N + DIGEST_SIZE
    if len(payload) != expected:
        raise CheckpointError(f"checkpoint holds {len(payload)} bytes, header announces {expected}")
    body, digest = payload[:-DIGEST_SIZE], payload[-DIGEST_SIZE:]
    if sha256_bytes(body) != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    arrays = np.frombuffer(body, dtype="<f8", offset=HEADER.size).reshape(2, N)
    grid = GridSpec(MODE_NAMES[mode], n, x_min, x_max, N)
    return FieldState(grid, t, arrays[0].copy(), arrays[1].copy(), delta, step)


def write_checkpoint(path, state):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_state(state))
    logging.debug("checkpoint t=%g step=%d -> %s", state.t, state.step, path)
    return path


def read_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_state(path.read_bytes())


def write_data(path, data):
    """Cauchy data (phi_0, phi_1) on t = 1."""
    return write_checkpoint(path, data.to_state(t=1.0))


def read_data(path):
    state = read_checkpoint(path)
    if state.step != 0:
        raise CheckpointError(f"{path} is an evolution checkpoint (step {state.step}), not Cauchy data")
    return state


@dataclass
class CheckpointWriter:
    """Evolution callback writing a checkpoint every `stride` steps (0 disables)."""

    directory: Path
    stride: int = 0

    def path_for(self, step):
        return Path(self.directory) / f"step_{step:09d}.memb"

    def __call__(self, state, prev):
        if self.stride and state.step % self.stride == 0:
            write_checkpoint(self.path_for(state.step), state)
