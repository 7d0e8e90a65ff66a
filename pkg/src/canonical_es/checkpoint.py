"""Binary checkpoint format (all fields little-endian).

Header, 40 bytes::

    magic   4s   b"CESC"
    version u16  1
    flags   u16  bit 0: optimizer block, bit 1: reference-stats block
    dim     u64
    iter    u64
    sigma   f64
    frames  u64

then ``dim`` float32 parameters. Optional blocks follow in flag order:

* optimizer: ``t`` u64, ``beta1, beta2, eps`` f64, ``m`` and ``v`` as ``dim`` float64 each;
* stats:     ``n`` u32 arrays, each ``len`` u32 + float64 data (mean, var, mean, var, ...).
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .es_openai import AdamState
from .policy import ReferenceStats
from .training import ESState

MAGIC = b"CESC"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQdQ")
_OPT = struct.Struct("<Qddd")
HAS_OPT = 1
HAS_STATS = 2


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    state: ESState
    stats: Optional[ReferenceStats] = None

    @property
    def theta(self) -> np.ndarray:
        return self.state.theta


def param_hash(theta: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta, dtype="<f4").tobytes()).hexdigest()


def encode_checkpoint(state: ESState, stats: Optional[ReferenceStats] = None) -> bytes:
    theta = np.ascontiguousarray(state.theta, dtype="<f4")
    opt = state.optimizer
    flags = (HAS_OPT if opt is not None else 0) | (HAS_STATS if stats is not None else 0)
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, flags, theta.shape[0], state.iteration, float(state.sigma),
                           state.frames))
    buf.write(theta.tobytes())
    if opt is not None:
        buf.write(_OPT.pack(opt.t, opt.beta1, opt.beta2, opt.eps))
        buf.write(np.ascontiguousarray(opt.m, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(opt.v, dtype="<f8").tobytes())
    if stats is not None:
        arrays = stats.to_arrays()
        buf.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            buf.write(struct.pack("<I", a.shape[0]))
            buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> Checkpoint:
    view = memoryview(data)
    if len(view) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, flags, dim, iteration, sigma, frames = _HEADER.unpack_from(view, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = _HEADER.size

    def take(n_bytes):
        nonlocal pos
        if pos + n_bytes > len(view):
            raise CheckpointError("truncated checkpoint payload")
        chunk = view[pos:pos + n_bytes]
        pos += n_bytes
        return chunk

    theta = np.frombuffer(take(4 * dim), dtype="<f4").astype(np.float32)
    opt = None
    if flags & HAS_OPT:
        t, b1, b2, eps = _OPT.unpack(take(_OPT.size))
        m = np.frombuffer(take(8 * dim), dtype="<f8").astype(np.float64)
        v = np.frombuffer(take(8 * dim), dtype="<f8").astype(np.float64)
        opt = AdamState(m, v, t, b1, b2, eps)
    stats = None
    if flags & HAS_STATS:
        (n,) = struct.unpack("<I", take(4))
        arrays = []
        for _ in range(n):
            (length,) = struct.unpack("<I", take(4))
            arrays.append(np.frombuffer(take(8 * length), dtype="<f8").astype(np.float64))
        stats = ReferenceStats.from_arrays(arrays)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes in checkpoint")
    return Checkpoint(ESState(theta, sigma, iteration, frames, opt), stats)


def save_checkpoint(path: Union[str, Path], state: ESState, stats: Optional[ReferenceStats] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(state, stats))
    tmp.replace(path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
