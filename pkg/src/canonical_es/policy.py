"""Forward-only policy networks with virtual batch normalization.

Layers are bias-free; a batch-norm layer's trainable shift plays the bias
role. Each layer computes ``kernel -> [batch norm] -> activation``, where the
batch norm uses statistics frozen from a reference batch (virtual batch
norm). The last batch-norm layer in a network also has a trainable scale.

Flat parameter layout, layer by layer:

* kernel, C order: conv ``(kh, kw, c_in, c_out)``, dense ``(n_in, n_out)``;
* shift ``beta`` ``(n_out,)`` if the layer has batch norm;
* scale ``alpha`` ``(n_out,)`` if it is the last batch-norm layer.

Conv layers use valid padding. A conv output is flattened in ``(h, w, c)``
order before a dense layer.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import RngStream

EPS_BN = 1e-5
INIT_STD = 0.05


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "conv" | "dense"
    out: int
    kernel: int = 0
    stride: int = 1
    activation: str = "elu"  # "elu" | "none"
    batch_norm: bool = True

    def __post_init__(self):
        if self.kind not in ("conv", "dense"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ("elu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "conv" and (self.kernel < 1 or self.stride < 1):
            raise ValueError("conv layers need kernel >= 1 and stride >= 1")


@dataclass(frozen=True)
class _Block:
    """Resolved shapes and flat-vector slices of one layer."""

    layer: LayerSpec
    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]
    kernel_shape: Tuple[int, ...]
    kernel_slice: slice
    beta_slice: Optional[slice]
    alpha_slice: Optional[slice]
    norm_index: Optional[int]


@dataclass(frozen=True)
class PolicySpec:
    input_shape: Tuple[int, ...]
    layers: Tuple[LayerSpec, ...]
    n_actions: int
    blocks: Tuple[_Block, ...] = field(init=False, repr=False, compare=False)
    n_params: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        blocks, n = _resolve(self.input_shape, self.layers)
        if blocks[-1].out_shape != (self.n_actions,):
            raise ValueError(f"network output {blocks[-1].out_shape} != ({self.n_actions},)")
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "n_params", n)

    @property
    def norm_blocks(self) -> List[_Block]:
        return [b for b in self.blocks if b.norm_index is not None]

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [asdict(lyr) for lyr in self.layers],
            "n_actions": self.n_actions,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PolicySpec":
        return cls(tuple(obj["input_shape"]), tuple(LayerSpec(**lyr) for lyr in obj["layers"]),
                   int(obj["n_actions"]))


def _resolve(input_shape, layers):
    if not layers:
        raise ValueError("a policy needs at least one layer")
    norm_layers = [i for i, lyr in enumerate(layers) if lyr.batch_norm]
    last_norm = norm_layers[-1] if norm_layers else None
    shape = tuple(input_shape)
    pos = 0
    blocks = []
    k = 0
    for i, lyr in enumerate(layers):
        if lyr.kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"conv layer {i} needs an (h, w, c) input, got {shape}")
            h, w, c = shape
            oh = (h - lyr.kernel) // lyr.stride + 1
            ow = (w - lyr.kernel) // lyr.stride + 1
            if oh < 1 or ow < 1:
                raise ValueError(f"conv layer {i} kernel larger than its {h}x{w} input")
            kshape = (lyr.kernel, lyr.kernel, c, lyr.out)
            out_shape = (oh, ow, lyr.out)
        else:
            n_in = int(np.prod(shape))
            kshape = (n_in, lyr.out)
            out_shape = (lyr.out,)
        ksize = int(np.prod(kshape))
        kslice = slice(pos, pos + ksize)
        pos += ksize
        bslice = aslice = None
        norm_index = None
        if lyr.batch_norm:
            bslice = slice(pos, pos + lyr.out)
            pos += lyr.out
            if i == last_norm:
                aslice = slice(pos, pos + lyr.out)
                pos += lyr.out
            norm_index = k
            k += 1
        blocks.append(_Block(lyr, shape, out_shape, kshape, kslice, bslice, aslice, norm_index))
        shape = out_shape
    return blocks, pos


def atari_spec(n_actions: int = 18, frames: int = 4) -> PolicySpec:
    """DQN-shaped conv net with ELU and batch norm on every layer."""
    return PolicySpec(
        (84, 84, frames),
        (
            LayerSpec("conv", 32, kernel=8, stride=4),
            LayerSpec("conv", 64, kernel=4, stride=2),
            LayerSpec("conv", 64, kernel=3, stride=1),
            LayerSpec("dense", 512),
            LayerSpec("dense", n_actions, activation="none"),
        ),
        n_actions,
    )


def mlp_spec(n_inputs: int, hidden: Sequence[int], n_actions: int, batch_norm: bool = True) -> PolicySpec:
    layers = [LayerSpec("dense", h, batch_norm=batch_norm) for h in hidden]
    layers.append(LayerSpec("dense", n_actions, activation="none", batch_norm=batch_norm))
    return PolicySpec((n_inputs,), tuple(layers), n_actions)


def param_count(spec: PolicySpec) -> int:
    return spec.n_params


@dataclass(frozen=True)
class ReferenceStats:
    """Per batch-norm layer mean and (floored) variance, frozen."""

    means: Tuple[np.ndarray, ...]
    variances: Tuple[np.ndarray, ...]

    @classmethod
    def identity(cls, spec: PolicySpec) -> "ReferenceStats":
        outs = [b.layer.out for b in spec.norm_blocks]
        return cls(tuple(np.zeros(n) for n in outs), tuple(np.ones(n) for n in outs))

    def __len__(self) -> int:
        return len(self.means)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferenceStats) or len(self) != len(other):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.means + self.variances,
                                                          other.means + other.variances))

    def to_arrays(self) -> List[np.ndarray]:
        return [np.asarray(a, dtype=np.float64) for pair in zip(self.means, self.variances) for a in pair]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "ReferenceStats":
        return cls(tuple(arrays[0::2]), tuple(arrays[1::2]))


def unflatten(spec: PolicySpec, params: np.ndarray) -> List[dict]:
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
    out = []
    for b in spec.blocks:
        entry = {"kernel": params[b.kernel_slice].reshape(b.kernel_shape)}
        if b.beta_slice is not None:
            entry["beta"] = params[b.beta_slice]
        if b.alpha_slice is not None:
            entry["alpha"] = params[b.alpha_slice]
        out.append(entry)
    return out


def flatten(spec: PolicySpec, layers: Sequence[dict]) -> np.ndarray:
    parts = []
    for b, entry in zip(spec.blocks, layers):
        parts.append(np.asarray(entry["kernel"]).reshape(-1))
        if b.beta_slice is not None:
            parts.append(np.asarray(entry["beta"]).reshape(-1))
        if b.alpha_slice is not None:
            parts.append(np.asarray(entry["alpha"]).reshape(-1))
    flat = np.concatenate(parts)
    if flat.shape != (spec.n_params,):
        raise ValueError("layer tensors do not match the policy layout")
    return flat


def init_params(spec: PolicySpec, seed: int) -> np.ndarray:
    """Kernels ~ N(0, 0.05^2); shifts 0; the final scale 1."""
    rng = RngStream(seed, 0)
    theta = np.zeros(spec.n_params, dtype=np.float32)
    for b in spec.blocks:
        n = b.kernel_slice.stop - b.kernel_slice.start
        theta[b.kernel_slice] = (INIT_STD * rng.normal(n)).astype(np.float32)
        if b.alpha_slice is not None:
            theta[b.alpha_slice] = 1.0
    return theta


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _conv(x, kernel, stride):
    # x: (n, h, w, c), kernel: (kh, kw, c, o)
    kh, kw = kernel.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # win: (n, oh, ow, c, kh, kw)
    return np.tensordot(win, kernel.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))


def _run(spec: PolicySpec, layers, stats: Optional[ReferenceStats], x: np.ndarray, collect=None):
    for b, entry in zip(spec.blocks, layers):
        k = entry["kernel"].astype(np.float64)
        if b.layer.kind == "conv":
            x = _conv(x, k, b.layer.stride)
        else:
            x = x.reshape(x.shape[0], -1) @ k
        if b.norm_index is not None:
            if collect is not None:
                axes = tuple(range(x.ndim - 1))
                mean = x.mean(axis=axes)
                var = np.maximum(x.var(axis=axes), EPS_BN)
                collect.append((mean, var))
            else:
                mean = stats.means[b.norm_index]
                var = stats.variances[b.norm_index]
            x = (x - mean) / np.sqrt(var)
            if b.alpha_slice is not None:
                x = x * entry["alpha"].astype(np.float64)
            x = x + entry["beta"].astype(np.float64)
        if b.layer.activation == "elu":
            x = _elu(x)
    return x


def _check_stats(spec, stats):
    n_norm = len(spec.norm_blocks)
    if n_norm and stats is None:
        raise ValueError("batch-norm network needs reference statistics")
    if stats is not None and len(stats) != n_norm:
        raise ValueError(f"{len(stats)} stat blocks for {n_norm} batch-norm layers")


def forward_batch(spec: PolicySpec, params, stats: Optional[ReferenceStats], states) -> np.ndarray:
    """Action scores, shape ``(n, n_actions)``, for a batch of states under one network."""
    x = np.asarray(states, dtype=np.float64)
    if x.shape[1:] != spec.input_shape:
        raise ValueError(f"state shape {x.shape[1:]} != {spec.input_shape}")
    _check_stats(spec, stats)
    return _run(spec, unflatten(spec, params), stats, x)


def forward(spec: PolicySpec, params, stats: Optional[ReferenceStats], state) -> np.ndarray:
    x = np.asarray(state, dtype=np.float64)
    if x.shape != spec.input_shape:
        raise ValueError(f"state shape {x.shape} != {spec.input_shape}")
    return forward_batch(spec, params, stats, x[None])[0]


def forward_population(spec: PolicySpec, params: np.ndarray, stats: Optional[ReferenceStats],
                       states) -> np.ndarray:
    """Row ``i`` of the result is network ``params[i]`` applied to ``states[i]``.

    Dense-only specs are vectorized over the population; conv specs loop.
    """
    params = np.asarray(params)
    x = np.asarray(states, dtype=np.float64)
    if params.ndim != 2 or params.shape[0] != x.shape[0]:
        raise ValueError("need one parameter row per state")
    _check_stats(spec, stats)
    if any(b.layer.kind == "conv" for b in spec.blocks):
        return np.stack([forward(spec, p, stats, s) for p, s in zip(params, x)])
    for b in spec.blocks:
        k = params[:, b.kernel_slice].astype(np.float64).reshape((-1,) + b.kernel_shape)
        x = np.einsum("ni,nio->no", x.reshape(x.shape[0], -1), k)
        if b.norm_index is not None:
            x = (x - stats.means[b.norm_index]) / np.sqrt(stats.variances[b.norm_index])
            if b.alpha_slice is not None:
                x = x * params[:, b.alpha_slice].astype(np.float64)
            x = x + params[:, b.beta_slice].astype(np.float64)
        if b.layer.activation == "elu":
            x = _elu(x)
    return x


def freeze_reference_stats(spec: PolicySpec, params, batch) -> ReferenceStats:
    """Push the reference batch through the network once, recording BN statistics."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == len(spec.input_shape):
        x = x[None]
    if x.shape[0] == 0:
        raise ValueError("empty reference batch")
    if x.shape[1:] != spec.input_shape:
        raise ValueError(f"state shape {x.shape[1:]} != {spec.input_shape}")
    collected: list = []
    _run(spec, unflatten(spec, params), None, x, collect=collected)
    return ReferenceStats(tuple(m for m, _ in collected), tuple(v for _, v in collected))


def select_action(scores) -> int:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("no action scores")
    if np.any(np.isnan(s)):
        raise ValueError("NaN action score")
    return int(np.argmax(s))


def collect_reference_batch(env, rng, size: int = 128, p_save: float = 0.01,
                            max_steps: int = 10_000_000) -> List[np.ndarray]:
    """Play uniformly random actions, keeping each visited state with probability ``p_save``."""
    if not callable(getattr(rng, "random", None)):
        raise TypeError("rng must provide random() and integers()")
    batch: List[np.ndarray] = []
    obs = env.reset(int(rng.integers(0, 2**31)))
    steps = 0
    while len(batch) < size:
        if steps >= max_steps:
            raise RuntimeError(f"collected only {len(batch)} states in {max_steps} steps")
        obs, _, done = env.step(int(rng.integers(0, env.n_actions)))
        steps += 1
        if rng.random() < p_save:
            batch.append(np.array(obs, copy=True))
        if done:
            obs = env.reset(int(rng.integers(0, 2**31)))
    return batch
