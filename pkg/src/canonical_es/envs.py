"""Desk-scale evaluation functions and the episode-rollout protocol.

Environment contract: ``reset(seed) -> obs``, ``step(action) -> (obs, reward,
done)``, attributes ``n_actions``, ``observation_shape`` and ``raw_frames``.
Raw-frame environments also expose ``last_frame``. Action 0 is the no-op in
every built-in environment. All objectives are maximized.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import RngStream
from .policy import select_action
from .preprocess import FramePipeline


@dataclass
class EpisodeConfig:
    max_steps: int = 25_000
    max_noops: int = 30
    frame_skip: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.max_noops < 0:
            raise ValueError("max_noops must be >= 0")
        if self.frame_skip < 1:
            raise ValueError("frame_skip must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RolloutResult:
    total_reward: float
    steps: int
    capped: bool
    frames: int
    noops: int = 0


class RolloutError(RuntimeError):
    def __init__(self, message: str, partial_reward: float, steps: int):
        super().__init__(message)
        self.partial_reward = partial_reward
        self.steps = steps


class StepLimitError(RuntimeError):
    pass


def episode_rollout(policy: Callable[[np.ndarray], np.ndarray], env, cfg: EpisodeConfig,
                    seed: Optional[int] = None) -> RolloutResult:
    """One episode: random no-ops, then act greedily on ``policy(state)`` scores.

    No-ops count as steps. Rewards are summed unclipped; the episode ends at
    termination (all lives lost) or after ``cfg.max_steps`` decisions.
    """
    rng = RngStream(cfg.seed if seed is None else seed, 0)
    env_seed = int(rng.integers(0, 2**31))
    n_noops = int(rng.integers(0, cfg.max_noops + 1))
    if getattr(env, "raw_frames", False):
        env = FramePipeline(env, cfg.frame_skip)
    total = 0.0
    steps = 0
    done = False
    try:
        obs = env.reset(env_seed)
        while steps < cfg.max_steps and not done:
            action = 0 if steps < n_noops else select_action(policy(obs))
            obs, reward, done = env.step(action)
            total += reward
            steps += 1
    except Exception as exc:
        raise RolloutError(f"environment fault after {steps} steps: {exc!r}", total, steps) from exc
    frames = env.raw_steps if isinstance(env, FramePipeline) else steps
    return RolloutResult(total, steps, not done, max(frames, 1), min(n_noops, steps))


# ---------------------------------------------------------------- benchmarks

def sphere_eval(theta) -> float:
    t = np.asarray(theta, dtype=np.float64)
    return -float(np.dot(t, t))


def rosenbrock_eval(theta) -> float:
    t = np.asarray(theta, dtype=np.float64)
    return -float(np.sum(100.0 * (t[1:] - t[:-1] ** 2) ** 2 + (1.0 - t[:-1]) ** 2))


def noisy_sphere_eval(theta, noise_std: float, rng) -> float:
    score = sphere_eval(theta)
    if noise_std == 0:
        return score
    return score + noise_std * float(rng.normal())


BENCHMARKS = {"sphere": sphere_eval, "rosenbrock": rosenbrock_eval}


# ------------------------------------------------------------------ cartpole

@dataclass(frozen=True)
class CartPoleConstants:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    force_mag: float = 10.0
    tau: float = 0.02
    theta_threshold: float = 12 * 2 * math.pi / 360
    x_threshold: float = 2.4
    max_steps: int = 500


class CartPoleBatch:
    """``n`` independent pole-balancing systems stepped with explicit Euler.

    Action 0 pushes left, 1 pushes right. Reward is +1 for every step taken,
    including the failing one; an episode stops after ``max_steps`` steps.
    """

    n_actions = 2
    observation_shape = (4,)
    raw_frames = False

    def __init__(self, n: int, constants: CartPoleConstants = CartPoleConstants()):
        self.n = n
        self.c = constants
        self.state = np.zeros((n, 4))
        self.done = np.ones(n, dtype=bool)
        self.t = np.zeros(n, dtype=np.int64)

    def reset(self, seeds) -> np.ndarray:
        for i, s in enumerate(seeds):
            self.state[i] = np.random.Generator(np.random.Philox(key=int(s))).uniform(-0.05, 0.05, 4)
        self.done[:] = False
        self.t[:] = 0
        return self.state.copy()

    def step(self, actions):
        """Advance live systems; returns ``(obs, reward, done)`` arrays."""
        c = self.c
        live = ~self.done
        x, x_dot, th, th_dot = self.state.T
        force = np.where(np.asarray(actions) == 1, c.force_mag, -c.force_mag)
        cos = np.cos(th)
        sin = np.sin(th)
        total_mass = c.masspole + c.masscart
        pml = c.masspole * c.length
        temp = (force + pml * th_dot * th_dot * sin) / total_mass
        th_acc = (c.gravity * sin - cos * temp) / (c.length * (4.0 / 3.0 - c.masspole * cos * cos / total_mass))
        x_acc = temp - pml * th_acc * cos / total_mass
        new = np.stack([x + c.tau * x_dot, x_dot + c.tau * x_acc, th + c.tau * th_dot, th_dot + c.tau * th_acc], axis=1)
        self.state = np.where(live[:, None], new, self.state)
        self.t += live
        x, _, th, _ = self.state.T
        failed = (x < -c.x_threshold) | (x > c.x_threshold) | (th < -c.theta_threshold) | (th > c.theta_threshold)
        reward = live.astype(np.float64)
        self.done = self.done | (live & (failed | (self.t >= c.max_steps)))
        return self.state.copy(), reward, self.done.copy()


class CartPole:
    """Single CartPole behind the environment contract (a batch of one)."""

    n_actions = 2
    observation_shape = (4,)
    raw_frames = False

    def __init__(self, constants: CartPoleConstants = CartPoleConstants()):
        self._batch = CartPoleBatch(1, constants)
        self._stepped_done = True

    @property
    def state(self) -> np.ndarray:
        return self._batch.state[0].copy()

    def reset(self, seed=None) -> np.ndarray:
        self._stepped_done = False
        return self._batch.reset([0 if seed is None else seed])[0]

    def step(self, action):
        if self._stepped_done:
            raise StepLimitError("step() after episode end; call reset()")
        obs, reward, done = self._batch.step([action])
        self._stepped_done = bool(done[0])
        return obs[0], float(reward[0]), bool(done[0])


def cartpole_env(**kwargs) -> CartPole:
    return CartPole(CartPoleConstants(**kwargs))


def cartpole_population_rollout(spec, params: np.ndarray, stats, seeds, cfg: EpisodeConfig,
                                constants: CartPoleConstants = CartPoleConstants()):
    """Vectorized ``episode_rollout`` of ``params[i]`` on CartPole with ``seeds[i]``.

    Returns ``(totals, steps)``; matches the scalar rollout member by member.
    """
    from .policy import forward_population

    n = params.shape[0]
    env_seeds = []
    noops = np.empty(n, dtype=np.int64)
    for i, s in enumerate(seeds):
        rng = RngStream(s, 0)
        env_seeds.append(int(rng.integers(0, 2**31)))
        noops[i] = int(rng.integers(0, cfg.max_noops + 1))
    env = CartPoleBatch(n, constants)
    obs = env.reset(env_seeds)
    totals = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    k = 0
    while active.any() and k < cfg.max_steps:
        scores = forward_population(spec, params, stats, obs)
        actions = np.argmax(scores, axis=1)
        actions = np.where(k < noops, 0, actions)
        obs, reward, done = env.step(actions)
        totals += reward * active
        steps += active
        active = active & ~done
        k += 1
    return totals, steps


# ------------------------------------------------------------------ toyframe

class ToyFrame:
    """Catch game rendered as 210x160 RGB frames.

    A ball falls from the top; the agent moves a paddle along the bottom
    (0 no-op, 1 left, 2 right) and gets +1 per catch. A miss costs one of
    ``lives``; the episode spans all lives. The ball is drawn on odd raw
    frames only, so with an even frame skip the last raw frame never shows
    it and only the max over the last two frames does.
    """

    H, W = 210, 160
    n_actions = 3
    observation_shape = (210, 160, 3)
    raw_frames = True
    PADDLE_W, PADDLE_H, PADDLE_ROW = 24, 4, 190
    BALL = 6
    BALL_COLOR = (236, 236, 236)
    PADDLE_COLOR = (200, 72, 72)

    def __init__(self, lives: int = 3, flicker: bool = True, paddle_speed: int = 4, ball_speed: int = 3):
        self.lives0 = lives
        self.flicker = flicker
        self.paddle_speed = paddle_speed
        self.ball_speed = ball_speed
        self.inject_reward = 0.0
        self._done = True
        self.last_frame = np.zeros(self.observation_shape, dtype=np.uint8)

    def _spawn(self):
        self.ball_x = int(self.rng.integers(0, self.W - self.BALL + 1))
        self.ball_y = 20
        self.ball_vx = int(self.rng.integers(-2, 3))

    def reset(self, seed=None):
        self.rng = np.random.Generator(np.random.Philox(key=0 if seed is None else int(seed)))
        self.lives = self.lives0
        self.paddle_x = (self.W - self.PADDLE_W) // 2
        self.frame_no = 0
        self._done = False
        self._spawn()
        self.last_frame = self.render()
        return self.last_frame

    def ball_visible(self) -> bool:
        return not self.flicker or self.frame_no % 2 == 1

    def render(self) -> np.ndarray:
        f = np.zeros(self.observation_shape, dtype=np.uint8)
        f[self.PADDLE_ROW:self.PADDLE_ROW + self.PADDLE_H, self.paddle_x:self.paddle_x + self.PADDLE_W] = self.PADDLE_COLOR
        if self.ball_visible():
            f[self.ball_y:self.ball_y + self.BALL, self.ball_x:self.ball_x + self.BALL] = self.BALL_COLOR
        return f

    def step(self, action):
        if self._done:
            raise StepLimitError("step() after episode end; call reset()")
        if action == 1:
            self.paddle_x = max(0, self.paddle_x - self.paddle_speed)
        elif action == 2:
            self.paddle_x = min(self.W - self.PADDLE_W, self.paddle_x + self.paddle_speed)
        self.ball_x += self.ball_vx
        if self.ball_x < 0 or self.ball_x > self.W - self.BALL:
            self.ball_vx = -self.ball_vx
            self.ball_x = min(max(self.ball_x, 0), self.W - self.BALL)
        self.ball_y += self.ball_speed
        reward = self.inject_reward
        self.inject_reward = 0.0
        if self.ball_y + self.BALL >= self.PADDLE_ROW:
            hit = self.ball_x + self.BALL > self.paddle_x and self.ball_x < self.paddle_x + self.PADDLE_W
            if hit:
                reward += 1.0
            else:
                self.lives -= 1
            self._spawn()
        self.frame_no += 1
        self._done = self.lives <= 0
        self.last_frame = self.render()
        return self.last_frame, reward, self._done


def toyframe_env(**kwargs) -> ToyFrame:
    return ToyFrame(**kwargs)


ENVS = {"cartpole": cartpole_env, "toyframe": toyframe_env}


def make_env(name: str, **kwargs):
    try:
        return ENVS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; known: {sorted(ENVS)}") from None
