"""Run configuration: a JSON document mapped onto dataclasses."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Union

from ..envs import EpisodeConfig

ALGORITHMS = ("canonical", "openai")
TRANSPORTS = ("inproc", "tcp")
ENV_IDS = ("sphere", "rosenbrock", "noisy_sphere", "cartpole", "toyframe")


class ConfigError(ValueError):
    pass


@dataclass
class Budget:
    """Stop at whichever limit is reached first; ``None`` means unlimited."""

    iterations: int
    frames: Optional[int] = None
    wall_seconds: Optional[float] = None

    def __post_init__(self):
        for name in ("iterations", "frames", "wall_seconds"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"budget {name} must be >= 0, got {v}")


@dataclass
class RunConfig:
    algorithm: str = "canonical"
    env: str = "cartpole"
    # benchmark objectives
    dim: int = 100
    init_std: float = 1.0
    noise_std: float = 0.0
    # policy networks (control environments)
    hidden: List[int] = field(default_factory=lambda: [32, 32])
    batch_norm: bool = True
    policy: Optional[dict] = None
    ref_batch_size: int = 128
    ref_p_save: float = 0.01
    # shared ES constants
    sigma: float = 0.05
    lam: int = 798
    # canonical ES
    mu: int = 50
    mu_grid: Optional[List[int]] = None
    # OpenAI ES
    lr: float = 0.01
    weight_decay: float = 0.005
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.9
    # episodes and evaluation
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    eval_rollouts: int = 30
    eval_seed: int = 1_000_003
    eval_center: bool = True
    # budgets: A is the early snapshot, B the end of training
    budget_a: Budget = field(default_factory=lambda: Budget(200, 2_000_000))
    budget_b: Budget = field(default_factory=lambda: Budget(1000, 10_000_000))
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    # noise table and distribution
    table_seed: int = 0
    table_length: int = 50_000_000
    transport: str = "inproc"
    workers: int = 1
    master: str = "127.0.0.1:0"
    spawn_workers: bool = True
    per_worker: int = 2
    straggler_factor: float = 10.0
    # output
    name: str = "run"
    output_dir: str = "runs"
    keep_all_checkpoints: bool = False

    def __post_init__(self):
        if isinstance(self.episode, dict):
            self.episode = _build(EpisodeConfig, self.episode, "episode")
        for key in ("budget_a", "budget_b"):
            if isinstance(getattr(self, key), dict):
                setattr(self, key, _build(Budget, getattr(self, key), key))
        self.validate()

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.env not in ENV_IDS:
            raise ConfigError(f"env must be one of {ENV_IDS}, got {self.env!r}")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport must be one of {TRANSPORTS}, got {self.transport!r}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if self.lam < 1:
            raise ConfigError("lam must be >= 1")
        if self.algorithm == "openai" and self.lam % 2:
            raise ConfigError("openai ES needs an even lam")
        for mu in self.mu_values():
            if self.algorithm == "canonical" and not 1 <= mu <= self.lam:
                raise ConfigError(f"need 1 <= mu <= lam, got mu={mu}")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if self.eval_rollouts < 1:
            raise ConfigError("eval_rollouts must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.table_length < 1:
            raise ConfigError("table_length must be >= 1")

    def mu_values(self) -> List[int]:
        if self.algorithm != "canonical":
            return [self.mu]
        return list(self.mu_grid) if self.mu_grid else [self.mu]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        return _build(cls, obj, "config")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj)


def _build(cls, obj: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad {where}: {exc}") from exc
