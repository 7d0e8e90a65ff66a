"""Atari-style state pipeline: flicker max, grayscale, resize/crop, stacking.

Processed frames stay in the raw ``[0, 255]`` range as float64; only the
final state handed to a network is scaled to ``[0, 1]`` (float32).
"""

from __future__ import annotations

from collections import deque

import numpy as np

LUMA = (0.299, 0.587, 0.114)
RESIZE_HW = (110, 84)
OUT_HW = (84, 84)
STACK = 4


def frame_max(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return np.maximum(a, b)


def to_grayscale(frame) -> np.ndarray:
    """BT.601 luma, evaluated as ``(0.299 R + 0.587 G) + 0.114 B``."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB frame, got {f.shape}")
    return LUMA[0] * f[..., 0] + LUMA[1] * f[..., 1] + LUMA[2] * f[..., 2]


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, clamped at the borders
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def bilinear_resize(g, out_h: int, out_w: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a single-channel frame, got {g.shape}")
    y0, y1, wy = _axis_weights(g.shape[0], out_h)
    x0, x1, wx = _axis_weights(g.shape[1], out_w)
    wy = wy[:, None]
    wx = wx[None, :]
    a = g[y0][:, x0]
    b = g[y0][:, x1]
    c = g[y1][:, x0]
    d = g[y1][:, x1]
    return (1.0 - wy) * ((1.0 - wx) * a + wx * b) + wy * ((1.0 - wx) * c + wx * d)


def resize_crop(g) -> np.ndarray:
    """Bilinear resize to 110x84, then keep the vertically centred 84 rows."""
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < OUT_HW[0] or g.shape[1] < OUT_HW[1]:
        raise ValueError(f"frame {g.shape} smaller than {OUT_HW}")
    r = bilinear_resize(g, *RESIZE_HW)
    top = (RESIZE_HW[0] - OUT_HW[0]) // 2
    return r[top:top + OUT_HW[0]]


def process_frame(raw) -> np.ndarray:
    return resize_crop(to_grayscale(raw))


class FrameStack:
    """The four most recent processed frames; a fresh stack replicates its first frame."""

    def __init__(self, size: int = STACK):
        self.size = size
        self.frames: deque = deque(maxlen=size)

    def reset(self):
        self.frames.clear()

    def push(self, frame) -> np.ndarray:
        f = np.asarray(frame, dtype=np.float64)
        if f.shape != OUT_HW:
            raise ValueError(f"expected an {OUT_HW} frame, got {f.shape}")
        if not self.frames:
            self.frames.extend([f] * self.size)
        else:
            self.frames.append(f)
        return self.tensor()

    def tensor(self) -> np.ndarray:
        return np.stack(self.frames, axis=-1)


def push_frame(stack: FrameStack, frame) -> np.ndarray:
    return stack.push(frame)


def skip_wrapper(env, action: int, skip: int = 4):
    """Repeat ``action`` for ``skip`` raw steps.

    Returns ``(max of the last two raw frames, summed reward, done, steps)``.
    Stops early on termination. With ``skip = 1`` the previous frame comes
    from ``env.last_frame`` (the frame before this step).
    """
    if skip < 1:
        raise ValueError("skip must be >= 1")
    prev = env.last_frame
    total = 0.0
    done = False
    frame = prev
    steps = 0
    for _ in range(skip):
        prev = frame
        frame, reward, done = env.step(action)
        total += reward
        steps += 1
        if done:
            break
    return frame_max(prev, frame), total, done, steps


class FramePipeline:
    """Wraps a raw-frame environment into one emitting ``84x84x4`` states in ``[0, 1]``.

    One ``step`` is one agent decision; ``raw_steps`` counts emulator frames.
    """

    def __init__(self, env, frame_skip: int = 4):
        self.env = env
        self.frame_skip = frame_skip
        self.stack = FrameStack()
        self.n_actions = env.n_actions
        self.observation_shape = OUT_HW + (STACK,)
        self.raw_frames = False
        self.raw_steps = 0

    def _state(self):
        return (self.stack.tensor() / 255.0).astype(np.float32)

    def reset(self, seed=None):
        first = self.env.reset(seed)
        self.stack.reset()
        self.stack.push(process_frame(first))
        self.raw_steps = 0
        return self._state()

    def step(self, action):
        obs, reward, done, steps = skip_wrapper(self.env, action, self.frame_skip)
        self.raw_steps += steps
        self.stack.push(process_frame(obs))
        return self._state(), reward, done
