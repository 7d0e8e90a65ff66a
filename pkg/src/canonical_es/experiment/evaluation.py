"""Post-training evaluation: repeated rollouts of one fixed policy."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from ..envs import EpisodeConfig
from ..policy import PolicySpec, ReferenceStats
from .tasks import PolicyFitness

log = logging.getLogger(__name__)


def eval_seed(base_seed: int, k: int) -> int:
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, 0xE7A1, int(k)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class EvalReport:
    scores: List[float]
    mean: float
    std: float
    n_effective: int
    failed: List[int] = field(default_factory=list)
    noops: List[int] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)
    base_seed: int = 0
    checkpoint: Optional[str] = None
    param_hash: Optional[str] = None

    @classmethod
    def from_scores(cls, scores, **kw) -> "EvalReport":
        s = [float(x) for x in scores]
        mean = float(np.mean(s)) if s else math.nan
        std = float(np.std(s)) if s else math.nan
        return cls(s, mean, std, len(s), **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(**obj)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate_fitness(fitness, theta, rollouts: int = 30, base_seed: int = 0, **kw) -> EvalReport:
    """Score ``theta`` ``rollouts`` times with independent seeds.

    Failed rollouts are left out of the scores and listed in ``failed``.
    """
    theta = np.asarray(theta)
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameters are not finite")
    scores, failed, noops, steps = [], [], [], []
    rollout = getattr(fitness, "rollout", None)
    for k in range(rollouts):
        seed = eval_seed(base_seed, k)
        try:
            if rollout is not None:
                r = rollout(theta, seed)
                score = r.total_reward
                noops.append(r.noops)
                steps.append(r.steps)
            else:
                out = fitness(theta, seed)
                score = out[0] if isinstance(out, tuple) else out
            if not math.isfinite(score):
                raise FloatingPointError(f"non-finite score {score}")
        except Exception as exc:  # noqa: BLE001 - recorded, not fatal
            log.warning("evaluation rollout %d failed: %r", k, exc)
            failed.append(k)
            continue
        scores.append(float(score))
    return EvalReport.from_scores(scores, failed=failed, noops=noops, steps=steps, base_seed=base_seed, **kw)


def evaluate_policy(theta, env: str, spec: PolicySpec, stats: Optional[ReferenceStats],
                    episode: EpisodeConfig, rollouts: int = 30, base_seed: int = 0, **kw) -> EvalReport:
    return evaluate_fitness(PolicyFitness(env, spec, stats, episode), theta, rollouts, base_seed, **kw)
