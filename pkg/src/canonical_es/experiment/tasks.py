"""Turn a task description into a fitness function.

A task is a plain JSON-able dict, so the master can ship it to TCP workers
in the handshake and each worker builds an identical fitness locally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import RngStream
from ..envs import (BENCHMARKS, EpisodeConfig, RolloutError, cartpole_population_rollout, episode_rollout,
                    make_env, noisy_sphere_eval)
from ..policy import (LayerSpec, PolicySpec, ReferenceStats, collect_reference_batch, forward,
                      freeze_reference_stats, init_params, mlp_spec)
from ..preprocess import FramePipeline
from .config import RunConfig

# stream ids under the run seed, kept apart from the ES sampling streams
REFERENCE_STREAM = 101
INIT_STREAM = 102

CONTROL_ENVS = ("cartpole", "toyframe")


def toyframe_spec(n_actions: int = 3, batch_norm: bool = True) -> PolicySpec:
    """Scaled-down conv net for the 84x84x4 toy frame states."""
    return PolicySpec(
        (84, 84, 4),
        (
            LayerSpec("conv", 8, kernel=8, stride=4, batch_norm=batch_norm),
            LayerSpec("conv", 8, kernel=4, stride=2, batch_norm=batch_norm),
            LayerSpec("dense", 32, batch_norm=batch_norm),
            LayerSpec("dense", n_actions, activation="none", batch_norm=batch_norm),
        ),
        n_actions,
    )


def policy_spec_for(cfg: RunConfig) -> PolicySpec:
    if cfg.policy is not None:
        return PolicySpec.from_dict(cfg.policy)
    if cfg.env == "cartpole":
        return mlp_spec(4, cfg.hidden, 2, batch_norm=cfg.batch_norm)
    if cfg.env == "toyframe":
        return toyframe_spec(batch_norm=cfg.batch_norm)
    raise ValueError(f"{cfg.env} is not a control environment")


def task_from_config(cfg: RunConfig) -> dict:
    task = {"env": cfg.env, "episode": cfg.episode.to_dict()}
    if cfg.env in CONTROL_ENVS:
        task["policy"] = policy_spec_for(cfg).to_dict()
    else:
        task["dim"] = cfg.dim
        task["noise_std"] = cfg.noise_std
    return task


@dataclass
class BenchmarkFitness:
    name: str
    noise_std: float = 0.0

    def __call__(self, theta, seed):
        if self.name == "noisy_sphere":
            return noisy_sphere_eval(theta, self.noise_std, RngStream(seed, 0)), 1
        return BENCHMARKS[self.name](theta), 1


class PolicyFitness:
    """Episode return of the policy ``theta`` in a fresh environment."""

    def __init__(self, env: str, spec: PolicySpec, stats: Optional[ReferenceStats], episode: EpisodeConfig):
        self.env = env
        self.spec = spec
        self.stats = stats
        self.episode = episode
        if env == "cartpole":
            self.evaluate_batch = self._cartpole_batch

    def rollout(self, theta, seed):
        params = np.asarray(theta, dtype=np.float32)
        env = make_env(self.env)
        return episode_rollout(lambda s: forward(self.spec, params, self.stats, s), env, self.episode, seed)

    def __call__(self, theta, seed):
        r = self.rollout(theta, seed)
        return r.total_reward, r.frames

    def _cartpole_batch(self, thetas, seeds):
        params = np.asarray(thetas, dtype=np.float32)
        totals, steps = cartpole_population_rollout(self.spec, params, self.stats, seeds, self.episode)
        return totals, steps


def fitness_for_task(task: dict, stats: Optional[ReferenceStats] = None):
    env = task["env"]
    if env in CONTROL_ENVS:
        return PolicyFitness(env, PolicySpec.from_dict(task["policy"]), stats, EpisodeConfig(**task["episode"]))
    if env in BENCHMARKS or env == "noisy_sphere":
        return BenchmarkFitness(env, float(task.get("noise_std", 0.0)))
    raise ValueError(f"unknown task env {env!r}")


def initial_theta(cfg: RunConfig, seed: int) -> np.ndarray:
    if cfg.env in CONTROL_ENVS:
        return init_params(policy_spec_for(cfg), seed)
    rng = RngStream(seed, INIT_STREAM)
    return (cfg.init_std * rng.normal(size=cfg.dim)).astype(np.float32)


def reference_stats(cfg: RunConfig, theta0: np.ndarray, seed: int) -> Optional[ReferenceStats]:
    """Freeze normalization statistics at ``theta0`` on random-play states."""
    if cfg.env not in CONTROL_ENVS:
        return None
    spec = policy_spec_for(cfg)
    if not spec.norm_blocks:
        return None
    env = make_env(cfg.env)
    if getattr(env, "raw_frames", False):
        env = FramePipeline(env, cfg.episode.frame_skip)
    batch = collect_reference_batch(env, RngStream(seed, REFERENCE_STREAM), cfg.ref_batch_size, cfg.ref_p_save)
    return freeze_reference_stats(spec, theta0, np.stack(batch))


__all__ = ["BenchmarkFitness", "PolicyFitness", "RolloutError", "fitness_for_task", "initial_theta",
           "policy_spec_for", "reference_stats", "task_from_config", "toyframe_spec"]
