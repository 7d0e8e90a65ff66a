"""Loop machinery shared by the canonical and OpenAI ES variants.

A *fitness* is any callable ``fitness(theta, seed) -> score`` or
``-> (score, frames)``; it may also expose
``evaluate_batch(thetas, seeds) -> (scores, frames)`` for vectorized
environments. An *evaluator* turns a list of noise indices into scored
offspring and hides where the rollouts actually run (see ``distrib``).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence

import numpy as np

from .core import NoiseIndex, NoiseTable, RngStream, perturb

log = logging.getLogger(__name__)

WORST_SCORE = -float(np.finfo(np.float64).max)


@dataclass(frozen=True)
class ScoredOffspring:
    idx: NoiseIndex
    score: float
    frames: int = 1
    slot: int = 0
    error: Optional[str] = None

    def to_json(self) -> dict:
        out = {"idx": self.idx.to_json(), "score": self.score, "frames": self.frames, "slot": self.slot}
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ScoredOffspring":
        return cls(NoiseIndex.from_json(obj["idx"]), float(obj["score"]), int(obj["frames"]),
                   int(obj["slot"]), obj.get("error"))


@dataclass
class ESState:
    theta: np.ndarray
    sigma: float
    iteration: int = 0
    frames: int = 0
    optimizer: Optional[object] = None

    @property
    def dim(self) -> int:
        return int(self.theta.shape[0])


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    frames: int
    best: float
    mean: float
    center: float = math.nan
    wall: float = field(default=0.0, compare=False)

    FIELDS = ("iteration", "frames", "best", "mean", "center", "wall")

    def as_tuple(self):
        return (self.iteration, self.frames, self.best, self.mean, self.center, self.wall)


@dataclass
class RunResult:
    state: ESState
    trace: List[TraceRow]
    thetas: List[np.ndarray] = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        return self.state.theta


class Evaluator(Protocol):
    def evaluate(self, theta: np.ndarray, sigma: float, indices: Sequence[NoiseIndex],
                 iteration: int) -> List[ScoredOffspring]: ...


def rollout_seed(base_seed: int, iteration: int, idx: NoiseIndex) -> int:
    """Seed for one offspring rollout; depends only on what crosses the wire."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(iteration), int(idx.offset), idx.sign + 1])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def center_seed(base_seed: int, iteration: int) -> int:
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(iteration), 0xC0FFEE])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _unpack(out) -> tuple:
    if isinstance(out, tuple):
        score, frames = out
    else:
        score, frames = out, 1
    return float(score), max(1, int(frames))


def fitness_from_function(fn: Callable[[np.ndarray], float]):
    """Adapt a seedless objective ``fn(theta) -> score`` to the fitness contract."""

    def fitness(theta, seed):
        return float(fn(theta)), 1

    fitness.__name__ = getattr(fn, "__name__", "fitness")
    return fitness


def evaluate_indices(fitness, theta: np.ndarray, sigma: float, table: NoiseTable,
                     indices: Sequence[NoiseIndex], slots: Sequence[int], iteration: int,
                     base_seed: int, worst_score: float = WORST_SCORE) -> List[ScoredOffspring]:
    """Evaluate ``theta + sigma * sign * eps`` for every index; failures get ``worst_score``."""
    seeds = [rollout_seed(base_seed, iteration, idx) for idx in indices]
    batch = getattr(fitness, "evaluate_batch", None)
    if batch is not None and len(indices) > 0:
        cands = np.stack([perturb(theta, sigma, table, idx) for idx in indices])
        try:
            scores, frames = batch(cands, seeds)
            results = [(float(s), max(1, int(f)), None) for s, f in zip(scores, frames)]
        except Exception as exc:  # noqa: BLE001 - a bad batch must not kill the run
            log.warning("batch evaluation failed at iteration %d: %r", iteration, exc)
            results = [(worst_score, 1, repr(exc))] * len(indices)
    else:
        results = []
        for idx, seed in zip(indices, seeds):
            try:
                score, frames = _unpack(fitness(perturb(theta, sigma, table, idx), seed))
                results.append((score, frames, None))
            except Exception as exc:  # noqa: BLE001
                log.warning("offspring %s failed at iteration %d: %r", idx, iteration, exc)
                results.append((worst_score, 1, repr(exc)))
    out = []
    for idx, slot, (score, frames, err) in zip(indices, slots, results):
        if not math.isfinite(score):
            err = err or f"non-finite score {score}"
            score = worst_score
        out.append(ScoredOffspring(idx, score, frames, int(slot), err))
    return out


class SerialEvaluator:
    """Evaluates every offspring in the calling thread."""

    def __init__(self, fitness, table: NoiseTable, seed: int = 0, worst_score: float = WORST_SCORE):
        self.fitness = fitness
        self.table = table
        self.seed = int(seed)
        self.worst_score = worst_score

    def evaluate(self, theta, sigma, indices, iteration):
        return evaluate_indices(self.fitness, theta, sigma, self.table, indices, range(len(indices)),
                                iteration, self.seed, self.worst_score)

    def evaluate_center(self, theta, iteration):
        score, _ = _unpack(self.fitness(theta.astype(np.float64), center_seed(self.seed, iteration)))
        return score

    def close(self):
        pass


def as_evaluator(evaluator, table: NoiseTable, seed: int, worst_score: float = WORST_SCORE):
    if hasattr(evaluator, "evaluate"):
        return evaluator
    if callable(evaluator):
        return SerialEvaluator(evaluator, table, seed, worst_score)
    raise TypeError(f"cannot evaluate with {evaluator!r}")


def run_loop(state: ESState, *, evaluator, sample: Callable[[int], List[NoiseIndex]],
             update: Callable[[ESState, List[ScoredOffspring]], np.ndarray],
             max_iterations: int, frame_budget: Optional[int] = None, eval_center: bool = False,
             keep_thetas: bool = True, on_iteration: Optional[Callable] = None,
             should_stop: Optional[Callable[[ESState], bool]] = None) -> RunResult:
    """Generic ES driver: sample, evaluate, update, until a budget runs out.

    ``sample(t)`` yields the indices of iteration ``t``; ``update`` returns the
    next parameter vector. The trace starts with a row for the incoming state.
    """
    budget = math.inf if frame_budget is None else frame_budget
    t0 = time.perf_counter()

    def center(st):
        if eval_center and hasattr(evaluator, "evaluate_center"):
            return float(evaluator.evaluate_center(st.theta, st.iteration))
        return math.nan

    trace = [TraceRow(state.iteration, state.frames, math.nan, math.nan, center(state), 0.0)]
    thetas = [state.theta.copy()] if keep_thetas else []
    if on_iteration is not None:
        on_iteration(state, trace[-1])
    while state.iteration < max_iterations and state.frames < budget:
        if should_stop is not None and should_stop(state):
            break
        indices = sample(state.iteration)
        scored = evaluator.evaluate(state.theta, state.sigma, indices, state.iteration)
        if len(scored) != len(indices):
            raise RuntimeError(f"evaluator returned {len(scored)} results for {len(indices)} offspring")
        new_theta = update(state, scored)
        if not np.all(np.isfinite(new_theta)):
            raise FloatingPointError(f"non-finite parameters after iteration {state.iteration}")
        state.theta = new_theta
        state.iteration += 1
        state.frames += sum(s.frames for s in scored)
        # failed offspring carry the sentinel score; keep them out of the summary
        scores = np.array([s.score for s in scored if s.error is None], dtype=np.float64)
        best, mean = (float(scores.max()), float(scores.mean())) if scores.size else (math.nan, math.nan)
        row = TraceRow(state.iteration, state.frames, best, mean, center(state), time.perf_counter() - t0)
        trace.append(row)
        if keep_thetas:
            thetas.append(state.theta.copy())
        if on_iteration is not None:
            on_iteration(state, row)
    return RunResult(state, trace, thetas)
