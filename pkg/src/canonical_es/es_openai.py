"""OpenAI-style natural ES: mirrored sampling, rank-shaped gradient, Adam.

Scores are returns to maximize, so the optimizer ascends: ``theta += step``.
Weight decay is a multiplicative shrink applied after the optimizer step.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import NoiseIndex, NoiseTable, RngStream, draw_offspring_indices, noise_slice, perturb
from .shaping import normalized_ranks
from .training import WORST_SCORE, ESState, RunResult, ScoredOffspring, as_evaluator, run_loop

OPTIMIZERS = ("adam", "sgd")


@dataclass
class OpenAIConfig:
    sigma: float = 0.05
    lam: int = 798
    lr: float = 0.01
    weight_decay: float = 0.005
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    seed: int = 0
    max_iterations: int = 1000
    frame_budget: Optional[int] = None
    worst_score: float = WORST_SCORE
    eval_center: bool = False

    def __post_init__(self):
        if self.lam < 2 or self.lam % 2:
            raise ValueError(f"population size must be even and >= 2, got {self.lam}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AdamState:
    """Moment estimates; also used for SGD-with-momentum (``m`` is the velocity)."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, d: int, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(np.zeros(d), np.zeros(d), 0, beta1, beta2, eps)


def adam_step(adam: AdamState, theta: np.ndarray, g: np.ndarray, alpha: float,
              weight_decay: float) -> Tuple[AdamState, np.ndarray]:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != theta.shape or g.shape != adam.m.shape:
        raise ValueError(f"shape mismatch: theta {theta.shape}, g {g.shape}, state {adam.m.shape}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient estimate rejected")
    t = adam.t + 1
    m = adam.beta1 * adam.m + (1.0 - adam.beta1) * g
    v = adam.beta2 * adam.v + (1.0 - adam.beta2) * (g * g)
    m_hat = m / (1.0 - adam.beta1 ** t)
    v_hat = v / (1.0 - adam.beta2 ** t)
    new = theta.astype(np.float64) + alpha * m_hat / (np.sqrt(v_hat) + adam.eps)
    new = new * (1.0 - weight_decay)
    return replace(adam, m=m, v=v, t=t), new.astype(np.float32)


def sgd_momentum_step(state: AdamState, theta: np.ndarray, g: np.ndarray, alpha: float,
                      weight_decay: float, momentum: float = 0.9) -> Tuple[AdamState, np.ndarray]:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != theta.shape:
        raise ValueError(f"shape mismatch: theta {theta.shape}, g {g.shape}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient estimate rejected")
    vel = momentum * state.m + g
    new = (theta.astype(np.float64) + alpha * vel) * (1.0 - weight_decay)
    return replace(state, m=vel, t=state.t + 1), new.astype(np.float32)


def mirrored_indices(cfg: OpenAIConfig, table: NoiseTable, d: int, iteration: int) -> List[NoiseIndex]:
    base = draw_offspring_indices(RngStream(cfg.seed, iteration + 1), cfg.lam // 2, table.length, d)
    out = []
    for idx in base:
        out.extend((idx, idx.mirrored()))
    return out


def mirrored_offspring(state: ESState, cfg: OpenAIConfig, table: NoiseTable,
                       rng: RngStream) -> List[Tuple[NoiseIndex, np.ndarray]]:
    if cfg.lam % 2:
        raise ValueError("mirrored sampling needs an even population")
    out = []
    for idx in draw_offspring_indices(rng, cfg.lam // 2, table.length, state.dim):
        for j in (idx, idx.mirrored()):
            out.append((j, perturb(state.theta, state.sigma, table, j)))
    return out


def estimate_gradient(weights, indices: Sequence[NoiseIndex], sigma: float, table: NoiseTable,
                      d: int) -> np.ndarray:
    """``(1 / (sigma * lam)) * sum_i weights_i * sign_i * eps_i``.

    ``weights`` are normalized ranks for the shaped estimator or raw scores
    for the plain Monte-Carlo one. Coefficients are folded per offset first,
    so a mirrored pair contributes ``(w_plus - w_minus) * eps``: a constant
    added to every weight cancels before any noise is touched.
    """
    w = np.asarray(weights, dtype=np.float64)
    lam = len(indices)
    if w.shape != (lam,):
        raise ValueError(f"{w.shape[0] if w.ndim else 0} weights for {lam} indices")
    coef: Dict[int, float] = {}
    for wi, idx in zip(w, indices):
        coef[idx.offset] = coef.get(idx.offset, 0.0) + (wi if idx.sign == 1 else -wi)
    g = np.zeros(d, dtype=np.float64)
    for offset, c in coef.items():
        if c != 0.0:
            g += c * noise_slice(table, NoiseIndex(offset, 1), d)
    return g / (sigma * lam)


def openai_update(state: ESState, scored: Sequence[ScoredOffspring], cfg: OpenAIConfig,
                  table: NoiseTable) -> np.ndarray:
    ranks = normalized_ranks([s.score for s in scored])
    g = estimate_gradient(ranks, [s.idx for s in scored], state.sigma, table, state.dim)
    opt = state.optimizer
    if opt is None:
        opt = AdamState.zeros(state.dim, cfg.beta1, cfg.beta2, cfg.eps)
    if cfg.optimizer == "adam":
        opt, theta = adam_step(opt, state.theta, g, cfg.lr, cfg.weight_decay)
    else:
        opt, theta = sgd_momentum_step(opt, state.theta, g, cfg.lr, cfg.weight_decay, cfg.momentum)
    state.optimizer = opt
    return theta


def run_openai(cfg: OpenAIConfig, evaluator, table: NoiseTable, theta0=None, *,
               state: Optional[ESState] = None, keep_thetas: bool = True,
               on_iteration=None, should_stop=None) -> RunResult:
    if state is None:
        if theta0 is None:
            raise ValueError("need theta0 or a state to resume from")
        theta = np.array(theta0, dtype=np.float32).ravel()
        state = ESState(theta, float(cfg.sigma),
                        optimizer=AdamState.zeros(theta.shape[0], cfg.beta1, cfg.beta2, cfg.eps))
    d = state.dim
    if table.length < d:
        raise ValueError(f"noise table ({table.length}) shorter than dimension {d}")
    ev = as_evaluator(evaluator, table, cfg.seed, cfg.worst_score)
    return run_loop(
        state,
        evaluator=ev,
        sample=lambda t: mirrored_indices(cfg, table, d, t),
        update=lambda st, scored: openai_update(st, scored, cfg, table),
        max_iterations=cfg.max_iterations,
        frame_budget=cfg.frame_budget,
        eval_center=cfg.eval_center,
        keep_thetas=keep_thetas,
        on_iteration=on_iteration,
        should_stop=should_stop,
    )
