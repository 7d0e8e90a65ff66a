"""Partitioning offspring across workers and merging their reports."""

from __future__ import annotations

import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..core import NoiseIndex
from ..training import ScoredOffspring
from .protocol import Assignment


class SchedulingError(RuntimeError):
    pass


def _units(indices: Sequence[NoiseIndex], slots: Sequence[int]) -> List[List[int]]:
    """Group positions into mirrored pairs (adjacent, same offset, opposite sign) or singletons."""
    units = []
    i = 0
    n = len(indices)
    while i < n:
        if i + 1 < n and indices[i].offset == indices[i + 1].offset and indices[i].sign == -indices[i + 1].sign:
            units.append([i, i + 1])
            i += 2
        else:
            units.append([i])
            i += 1
    return units


def dispatch_iteration(pending: Sequence[NoiseIndex], workers: Sequence, *, slots: Optional[Sequence[int]] = None,
                       per_worker: int = 2, run_id: str = "run", iteration: int = 0, sigma: float = 0.0,
                       theta_hash: str = "", seed: int = 0) -> List[Tuple[object, Assignment]]:
    """Split ``pending`` into contiguous chunks, one per worker used.

    Mirrored pairs never straddle two chunks. When there are enough workers
    each chunk holds ``per_worker`` offspring; otherwise the offspring are
    spread as evenly as possible over all workers.
    """
    if not workers:
        raise SchedulingError("no workers available")
    slots = list(range(len(pending))) if slots is None else list(slots)
    if len(slots) != len(pending):
        raise ValueError("one slot per pending index required")
    if not pending:
        return []
    units = _units(pending, slots)
    total = len(pending)
    if total <= per_worker * len(workers):
        n_chunks = min(len(units), math.ceil(total / per_worker))
    else:
        n_chunks = len(workers)
    n_chunks = max(1, min(n_chunks, len(units)))
    out = []
    for w, chunk in zip(workers, np.array_split(np.arange(len(units)), n_chunks)):
        pos = [p for u in chunk for p in units[u]]
        out.append((w, Assignment(run_id, iteration, tuple(pending[p] for p in pos),
                                  tuple(slots[p] for p in pos), sigma, theta_hash, seed)))
    return out


class Collector:
    """Accepts the first result for each expected slot and ignores the rest."""

    def __init__(self, indices: Sequence[NoiseIndex], slots: Optional[Sequence[int]] = None):
        slots = list(range(len(indices))) if slots is None else list(slots)
        self.expected: Dict[int, NoiseIndex] = dict(zip(slots, indices))
        self.received: Dict[int, ScoredOffspring] = {}
        self.duplicates = 0
        self.foreign = 0

    def add(self, results: Iterable[ScoredOffspring]) -> int:
        accepted = 0
        for r in results:
            if r.slot not in self.expected or self.expected[r.slot] != r.idx:
                self.foreign += 1
            elif r.slot in self.received:
                self.duplicates += 1
            else:
                self.received[r.slot] = r
                accepted += 1
        return accepted

    def missing(self) -> List[int]:
        return [s for s in self.expected if s not in self.received]

    @property
    def complete(self) -> bool:
        return len(self.received) == len(self.expected)

    def results(self) -> List[ScoredOffspring]:
        if not self.complete:
            raise SchedulingError(f"{len(self.missing())} offspring still missing")
        return [self.received[s] for s in self.expected]
