"""Numeric foundations shared by both ES variants.

Parameter vectors are plain 1-D ``numpy.float32`` arrays. Perturbations are
never shipped between processes: every worker rebuilds the same
:class:`NoiseTable` from ``(seed, length)`` and addresses a perturbation by a
:class:`NoiseIndex` (offset + mirror sign).

Noise generation is pinned so tables are bit-identical everywhere:

* uniform source: Philox4x64-10 (counter based), key = ``seed``, counter 0;
* each 64-bit draw ``x`` becomes ``u = ((x >> 11) + 1) * 2**-53`` in (0, 1];
* consecutive pairs ``(u1, u2)`` go through Box-Muller in float64,
  ``z0 = sqrt(-2 ln u1) cos(2 pi u2)``, ``z1 = sqrt(-2 ln u1) sin(2 pi u2)``,
  stored interleaved ``z0, z1, z0, z1, ...`` and rounded to float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

DEFAULT_TABLE_LENGTH = 50_000_000
_CHUNK_PAIRS = 1 << 20
_TWO_PI = 2.0 * np.pi
_U53 = 2.0 ** -53


def as_param_vector(values) -> np.ndarray:
    """Copy ``values`` into a contiguous float32 parameter vector."""
    theta = np.array(values, dtype=np.float32).ravel()
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector contains non-finite entries")
    return theta


class RngStream:
    """Deterministic random stream identified by ``(seed, stream_id)``.

    Backed by Philox with the 128-bit key ``seed | stream_id << 64``, so two
    streams with equal identity produce equal sequences on any platform.
    Not thread-safe; one owner per stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = (self.seed & 0xFFFFFFFFFFFFFFFF) | ((self.stream_id & 0xFFFFFFFFFFFFFFFF) << 64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size, endpoint=False)

    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _box_muller(raw: np.ndarray) -> np.ndarray:
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _U53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(u.shape[0], dtype=np.float64)
    out[0::2] = r * np.cos(_TWO_PI * u2)
    out[1::2] = r * np.sin(_TWO_PI * u2)
    return out


@dataclass(frozen=True, eq=False)
class NoiseTable:
    """Immutable pool of standard-normal float32 samples."""

    seed: int
    length: int
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def identity(self) -> dict:
        return {"seed": self.seed, "length": self.length}

    def __len__(self) -> int:
        return self.length


def noise_table_create(seed: int, length: int = DEFAULT_TABLE_LENGTH) -> NoiseTable:
    if length < 1:
        raise ValueError(f"noise table length must be >= 1, got {length}")
    bitgen = np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF)
    values = np.empty(length, dtype=np.float32)
    n_pairs = (length + 1) // 2
    pos = 0
    done = 0
    while done < n_pairs:
        chunk = min(_CHUNK_PAIRS, n_pairs - done)
        z = _box_muller(bitgen.random_raw(2 * chunk))
        take = min(z.shape[0], length - pos)
        values[pos:pos + take] = z[:take]
        pos += take
        done += chunk
    return NoiseTable(seed=int(seed), length=int(length), values=values)


@dataclass(frozen=True)
class NoiseIndex:
    offset: int
    sign: int = 1

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError(f"negative noise offset {self.offset}")
        if self.sign not in (1, -1):
            raise ValueError(f"mirror sign must be +1 or -1, got {self.sign}")

    def mirrored(self) -> "NoiseIndex":
        return NoiseIndex(self.offset, -self.sign)

    def to_json(self) -> list:
        return [self.offset, self.sign]

    @classmethod
    def from_json(cls, obj) -> "NoiseIndex":
        return cls(int(obj[0]), int(obj[1]))


def noise_slice(table: NoiseTable, idx: NoiseIndex, d: int) -> np.ndarray:
    """Return ``sign * table[offset:offset + d]`` as a fresh float32 array."""
    if d < 0 or idx.offset + d > table.length:
        raise IndexError(
            f"noise slice [{idx.offset}, {idx.offset + d}) outside table of length {table.length}"
        )
    eps = table.values[idx.offset:idx.offset + d]
    return eps.copy() if idx.sign == 1 else -eps


def perturb(theta: np.ndarray, sigma: float, table: NoiseTable, idx: NoiseIndex) -> np.ndarray:
    """Candidate ``theta + sigma * eps`` in float64, so the step survives rounding."""
    eps = noise_slice(table, idx, theta.shape[0])
    return theta.astype(np.float64) + float(sigma) * eps.astype(np.float64)


def draw_offspring_indices(rng: RngStream, count: int, table_length: int, d: int) -> List[NoiseIndex]:
    """Uniform offsets in ``[0, table_length - d]``, with replacement, sign +1."""
    if table_length < d:
        raise ValueError(f"noise table ({table_length}) shorter than dimension {d}")
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    offsets = rng.integers(0, table_length - d + 1, size=count)
    return [NoiseIndex(int(o), 1) for o in offsets]
