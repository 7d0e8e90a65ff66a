import numpy as np
import pytest

from canonical_es.envs import ToyFrame
from canonical_es.preprocess import (FramePipeline, FrameStack, bilinear_resize, frame_max, process_frame,
                                     push_frame, resize_crop, skip_wrapper, to_grayscale)

import oracles

INPUTS = [oracles.read_golden(f"input_{k}.bin") for k in range(6)]


def test_frame_max_golden():
    out = frame_max(INPUTS[0], INPUTS[1])
    gold = oracles.read_golden("frame_max.bin")
    assert out.dtype == gold.dtype and out.tobytes() == gold.tobytes()


def test_grayscale_golden():
    out = to_grayscale(oracles.read_golden("frame_max.bin"))
    assert out.tobytes() == oracles.read_golden("grayscale.bin").tobytes()


def test_resize_crop_golden():
    out = resize_crop(oracles.read_golden("grayscale.bin"))
    gold = oracles.read_golden("resize_crop.bin")
    assert out.shape == (84, 84) and out.tobytes() == gold.tobytes()


def test_stack_goldens():
    processed = [process_frame(f) for f in INPUTS]
    s = FrameStack()
    first = push_frame(s, processed[0])
    assert first.tobytes() == oracles.read_golden("stack_first.bin").tobytes()
    for f in processed[1:]:
        out = push_frame(s, f)
    assert out.shape == (84, 84, 4)
    assert out.tobytes() == oracles.read_golden("stack_six.bin").tobytes()


def test_frame_max_elementwise_and_shape_check():
    a = np.array([[[1, 9, 3]]], dtype=np.uint8)
    b = np.array([[[4, 2, 3]]], dtype=np.uint8)
    assert frame_max(a, b).tolist() == [[[4, 9, 3]]]
    with pytest.raises(ValueError):
        frame_max(a, np.zeros((2, 1, 3), dtype=np.uint8))


def test_grayscale_primaries():
    f = np.zeros((1, 3, 3), dtype=np.uint8)
    f[0, 0, 0] = f[0, 1, 1] = f[0, 2, 2] = 255
    assert np.allclose(to_grayscale(f)[0], [0.299 * 255, 0.587 * 255, 0.114 * 255])
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((4, 4)))


def test_resize_identity_and_constant(rng):
    g = rng.random((7, 5))
    assert np.allclose(bilinear_resize(g, 7, 5), g, rtol=0, atol=1e-15)
    assert np.allclose(bilinear_resize(np.full((20, 30), 3.5), 9, 11), 3.5)


def test_resize_matches_oracle_on_random(rng):
    g = rng.random((50, 37)) * 255
    assert bilinear_resize(g, 23, 19).tobytes() == oracles.bilinear_oracle(g, 23, 19).tobytes()


def test_resize_crop_rejects_small():
    with pytest.raises(ValueError):
        resize_crop(np.zeros((80, 160)))


def _ball_visible(frame):
    return bool(np.any(np.all(frame == ToyFrame.BALL_COLOR, axis=-1)))


def test_flicker_needs_frame_max():
    env = ToyFrame(lives=50)
    env.reset(3)
    rng = np.random.default_rng(0)
    raw_seen, max_seen = [], []
    for _ in range(400):
        out, _, done, _ = skip_wrapper(env, int(rng.integers(0, 3)), 4)
        raw_seen.append(_ball_visible(env.last_frame))
        max_seen.append(_ball_visible(out))
        if done:
            break
    raw_rate = np.mean([_ball_visible(f) for f in _raw_sequence()])
    assert 0.45 <= raw_rate <= 0.55
    assert all(max_seen)
    # the observed frame after an even skip is an odd-indexed one: never visible alone
    assert not any(raw_seen)


def _raw_sequence():
    env = ToyFrame(lives=50)
    frames = [env.reset(5)]
    for _ in range(399):
        frames.append(env.step(0)[0])
    return frames


def test_flicker_processed_state_differs():
    env = ToyFrame(lives=50)
    env.reset(1)
    out, _, _, _ = skip_wrapper(env, 0, 4)
    assert not np.array_equal(process_frame(out), process_frame(env.last_frame))


class _Counter:
    """Raw env whose reward is the frame number; terminates at frame 6."""

    n_actions = 2
    raw_frames = True

    def reset(self, seed=None):
        self.t = 0
        self.last_frame = np.full((210, 160, 3), 0, dtype=np.uint8)
        return self.last_frame

    def step(self, action):
        self.t += 1
        self.last_frame = np.full((210, 160, 3), self.t, dtype=np.uint8)
        return self.last_frame, float(self.t), self.t >= 6


def test_skip_wrapper_sums_and_stops():
    env = _Counter()
    env.reset()
    frame, reward, done, steps = skip_wrapper(env, 1, 4)
    assert (reward, done, steps) == (1 + 2 + 3 + 4, False, 4)
    assert frame[0, 0, 0] == 4
    frame, reward, done, steps = skip_wrapper(env, 1, 4)
    assert (reward, done, steps) == (5 + 6, True, 2)
    with pytest.raises(ValueError):
        skip_wrapper(env, 0, 0)


def test_skip_one_uses_previous_frame():
    env = _Counter()
    env.reset()
    frame, reward, _, _ = skip_wrapper(env, 0, 1)
    assert frame[0, 0, 0] == 1 and reward == 1.0


def test_pipeline_states():
    p = FramePipeline(ToyFrame(), 4)
    s = p.reset(0)
    assert s.shape == (84, 84, 4) and s.dtype == np.float32
    assert np.array_equal(s[..., 0], s[..., 3])
    s2, _, _ = p.step(2)
    assert 0.0 <= s2.min() and s2.max() <= 1.0
    assert np.array_equal(s2[..., :3], s[..., 1:])
    assert p.raw_steps == 4
