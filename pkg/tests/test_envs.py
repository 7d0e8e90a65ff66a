import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from canonical_es.core import RngStream
from canonical_es.envs import (CartPole, CartPoleBatch, CartPoleConstants, EpisodeConfig, RolloutError, StepLimitError, ToyFrame,
                               cartpole_population_rollout, episode_rollout, make_env, noisy_sphere_eval,
                               rosenbrock_eval, sphere_eval)
from canonical_es.policy import forward, freeze_reference_stats, init_params, mlp_spec

import oracles


def test_benchmarks():
    assert sphere_eval(np.zeros(5)) == 0.0
    assert sphere_eval([1.0, 2.0]) == -5.0
    assert rosenbrock_eval(np.ones(6)) == 0.0
    assert rosenbrock_eval([0.0, 0.0]) == -1.0
    a = noisy_sphere_eval(np.ones(3), 0.5, RngStream(1, 0))
    b = noisy_sphere_eval(np.ones(3), 0.5, RngStream(1, 0))
    assert a == b != -3.0
    assert noisy_sphere_eval(np.ones(3), 0.0, RngStream(1, 0)) == -3.0


def test_cartpole_matches_scalar_physics():
    env = CartPole()
    s = tuple(env.reset(17))
    actions = [1, 0, 0, 1, 1, 1, 0, 1, 0, 0] * 3
    for a in actions:
        obs, r, done = env.step(a)
        s = oracles.cartpole_step_oracle(s, a)
        assert np.allclose(obs, s, rtol=1e-12, atol=1e-15)
        assert r == 1.0
        if done:
            break


def test_cartpole_reset_range_and_failure():
    env = CartPole()
    s = env.reset(3)
    assert np.all(np.abs(s) <= 0.05)
    steps, done = 0, False
    while not done:
        _, _, done = env.step(0)
        steps += 1
    assert 5 < steps < 100
    with pytest.raises(StepLimitError):
        env.step(0)


def test_cartpole_step_cap():
    # with failure thresholds out of reach only the step cap ends an episode
    env = CartPoleBatch(2, CartPoleConstants(theta_threshold=1e9, x_threshold=1e9, max_steps=37))
    env.reset([0, 1])
    n = 0
    done = np.array([False, False])
    while not done.all():
        _, r, done = env.step([0, 1])
        n += 1
    assert n == 37 and env.t.tolist() == [37, 37]
    assert CartPoleConstants().max_steps == 500


def test_population_rollout_matches_scalar():
    spec = mlp_spec(4, [8], 2)
    rng = np.random.default_rng(2)
    base = init_params(spec, 0)
    stats = freeze_reference_stats(spec, base, rng.normal(0, 0.05, (32, 4)))
    params = np.stack([base + rng.normal(0, 0.3, base.shape).astype(np.float32) for _ in range(6)])
    seeds = [11, 12, 13, 14, 15, 16]
    cfg = EpisodeConfig(max_steps=200, max_noops=5, frame_skip=1)
    totals, steps = cartpole_population_rollout(spec, params, stats, seeds, cfg)
    for p, s, t, n in zip(params, seeds, totals, steps):
        r = episode_rollout(lambda x: forward(spec, p, stats, x), CartPole(), cfg, s)
        assert (r.total_reward, r.steps) == (t, n)


def test_rollout_deterministic_and_seed_sensitive():
    cfg = EpisodeConfig(max_steps=100, max_noops=5, frame_skip=4)
    pol = lambda s: np.array([0.0, float(s[..., 0].mean()), 0.5])  # noqa: E731
    a = episode_rollout(pol, ToyFrame(), cfg, 4)
    b = episode_rollout(pol, ToyFrame(), cfg, 4)
    assert a == b
    assert {episode_rollout(pol, ToyFrame(), cfg, s).noops for s in range(20)} != {a.noops}


class _Endless:
    """Never terminates; reward 1 per step."""

    n_actions = 2
    raw_frames = False

    def reset(self, seed=None):
        return np.zeros(2)

    def step(self, action):
        return np.zeros(2), 1.0, False


def test_noop_count_uniform():
    cfg = EpisodeConfig(max_steps=31, max_noops=30, frame_skip=1)
    counts = np.zeros(31, dtype=int)
    for s in range(10_000):
        counts[episode_rollout(lambda x: np.zeros(2), _Endless(), cfg, s).noops] += 1
    p = sps.chisquare(counts).pvalue
    assert p > 0.001, counts


@given(st.integers(1, 60), st.integers(0, 10), st.integers(0, 1000))
def test_episode_cap(max_steps, max_noops, seed):
    cfg = EpisodeConfig(max_steps=max_steps, max_noops=max_noops, frame_skip=1)
    r = episode_rollout(lambda x: np.zeros(2), _Endless(), cfg, seed)
    assert r.steps == max_steps and r.capped
    assert r.total_reward == max_steps


class _Injecting(ToyFrame):
    def __init__(self, at: int, **kw):
        super().__init__(**kw)
        self.at = at
        self.calls = 0

    def step(self, action):
        self.calls += 1
        if self.calls == self.at:
            self.inject_reward = 1000.0
        return super().step(action)


def test_reward_is_unclipped():
    cfg = EpisodeConfig(max_steps=200, max_noops=3, frame_skip=4)
    pol = lambda s: np.array([0.1, 0.0, 0.2])  # noqa: E731
    plain = episode_rollout(pol, _Injecting(at=-1), cfg, 9)
    bumped = episode_rollout(pol, _Injecting(at=10), cfg, 9)
    assert bumped.total_reward - plain.total_reward == 1000.0
    assert bumped.steps == plain.steps


class _Broken(_Endless):
    def step(self, action):
        raise RuntimeError("emulator fault")


def test_env_fault_becomes_rollout_error():
    with pytest.raises(RolloutError) as info:
        episode_rollout(lambda x: np.zeros(2), _Broken(), EpisodeConfig(max_noops=0), 0)
    assert info.value.steps == 0


def test_noops_are_action_zero():
    seen = []

    class Rec(_Endless):
        def step(self, action):
            seen.append(action)
            return super().step(action)

    cfg = EpisodeConfig(max_steps=40, max_noops=30, frame_skip=1)
    r = episode_rollout(lambda x: np.array([0.0, 1.0]), Rec(), cfg, 3)
    assert seen[:r.noops] == [0] * r.noops and all(a == 1 for a in seen[r.noops:])


def test_toyframe_frames_and_rewards():
    env = ToyFrame()
    f = env.reset(0)
    assert f.shape == (210, 160, 3) and f.dtype == np.uint8
    total, done, n = 0.0, False, 0
    rng = np.random.default_rng(1)
    while not done:
        f, r, done = env.step(int(rng.integers(0, 3)))
        assert f.shape == (210, 160, 3)
        total += r
        n += 1
    assert env.lives == 0 and n > 50
    with pytest.raises(StepLimitError):
        env.step(0)


def test_toyframe_tracking_policy_catches():
    env = ToyFrame()
    env.reset(2)
    total, done = 0.0, False
    while not done and total < 20:
        centre = env.paddle_x + env.PADDLE_W / 2
        target = env.ball_x + env.BALL / 2
        a = 0 if abs(centre - target) < 3 else (1 if target < centre else 2)
        _, r, done = env.step(a)
        total += r
    assert total >= 20


def test_make_env():
    assert isinstance(make_env("cartpole"), CartPole)
    with pytest.raises(ValueError):
        make_env("pong")
