"""Canonical (mu, lambda)-ES with log-linear weighted recombination.

The step size is fixed for the whole run; there is no step-size adaptation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import NoiseIndex, NoiseTable, RngStream, draw_offspring_indices, noise_slice, perturb
from .shaping import order_best_first, recombination_weights
from .training import WORST_SCORE, ESState, RunResult, ScoredOffspring, as_evaluator, run_loop


@dataclass
class CanonicalConfig:
    sigma: float = 0.05
    lam: int = 798
    mu: int = 50
    seed: int = 0
    max_iterations: int = 1000
    frame_budget: Optional[int] = None
    worst_score: float = WORST_SCORE
    eval_center: bool = False

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 1 <= self.mu <= self.lam:
            raise ValueError(f"need 1 <= mu <= lam, got mu={self.mu}, lam={self.lam}")

    def to_dict(self) -> dict:
        return asdict(self)


def sample_indices(cfg: CanonicalConfig, table: NoiseTable, d: int, iteration: int) -> List[NoiseIndex]:
    # stream 0 is left for initialisation; iteration t draws from stream t + 1
    return draw_offspring_indices(RngStream(cfg.seed, iteration + 1), cfg.lam, table.length, d)


def generate_offspring(state: ESState, cfg: CanonicalConfig, table: NoiseTable,
                       rng: RngStream) -> List[Tuple[NoiseIndex, np.ndarray]]:
    indices = draw_offspring_indices(rng, cfg.lam, table.length, state.dim)
    return [(idx, perturb(state.theta, state.sigma, table, idx)) for idx in indices]


def recombine(state: ESState, scored: Sequence[ScoredOffspring], weights, table: NoiseTable) -> np.ndarray:
    """``theta + sigma * sum_j w_j eps_(j)`` over the best ``mu`` offspring."""
    w = np.asarray(weights, dtype=np.float64)
    mu = w.shape[0]
    if len(scored) < mu:
        raise RuntimeError(f"only {len(scored)} offspring for mu={mu}")
    order = order_best_first([s.score for s in scored])
    d = state.dim
    step = np.zeros(d, dtype=np.float64)
    for wj, k in zip(w, order[:mu]):
        step += wj * noise_slice(table, scored[k].idx, d)
    new = state.theta.astype(np.float64) + state.sigma * step
    return new.astype(np.float32)


def run_canonical(cfg: CanonicalConfig, evaluator, table: NoiseTable, theta0=None, *,
                  state: Optional[ESState] = None, keep_thetas: bool = True,
                  on_iteration=None, should_stop=None) -> RunResult:
    """Run the canonical ES loop from ``theta0`` (or resume from ``state``)."""
    if state is None:
        if theta0 is None:
            raise ValueError("need theta0 or a state to resume from")
        state = ESState(np.array(theta0, dtype=np.float32).ravel(), float(cfg.sigma))
    d = state.dim
    if table.length < d:
        raise ValueError(f"noise table ({table.length}) shorter than dimension {d}")
    weights = recombination_weights(cfg.mu)
    ev = as_evaluator(evaluator, table, cfg.seed, cfg.worst_score)
    return run_loop(
        state,
        evaluator=ev,
        sample=lambda t: sample_indices(cfg, table, d, t),
        update=lambda st, scored: recombine(st, scored, weights, table),
        max_iterations=cfg.max_iterations,
        frame_budget=cfg.frame_budget,
        eval_center=cfg.eval_center,
        keep_thetas=keep_thetas,
        on_iteration=on_iteration,
        should_stop=should_stop,
    )
