"""Training runs: one ES run per (seed, mu), two evaluation budgets, resumable.

Directory layout under ``<output_dir>/<name>``::

    config.json  manifest.json  results.csv  table.txt
    <unit>/trace.csv  latest.ckpt  progress.json
    <unit>/budget_a.ckpt  trace_budget_a.csv  eval_budget_a.json
    <unit>/final.ckpt  eval_final.json
    <unit>/iterNNNNNN.ckpt  (only with keep_all_checkpoints)

Budget A is snapshotted the first time any of its limits (iterations,
frames, wall seconds) is reached; training continues to budget B.
"""

from __future__ import annotations

import hashlib
import json
import logging
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .. import __version__
from ..checkpoint import load_checkpoint, param_hash, save_checkpoint
from ..core import noise_table_create
from ..distrib import PROTOCOL_VERSION, InProcessPool, NoWorkersError, TcpMaster
from ..es_canonical import CanonicalConfig, run_canonical
from ..es_openai import OpenAIConfig, run_openai
from ..policy import EPS_BN, INIT_STD
from ..training import ESState
from .config import Budget, RunConfig
from .evaluation import EvalReport, evaluate_fitness
from .report import ResultRow, format_table, ordered, read_trace, write_results, write_trace
from .tasks import (CONTROL_ENVS, INIT_STREAM, REFERENCE_STREAM, fitness_for_task, initial_theta,
                    policy_spec_for, reference_stats, task_from_config)

log = logging.getLogger(__name__)


def budget_hit(b: Budget, iteration: int, frames: int, wall: float) -> Optional[str]:
    """Name of the first limit of ``b`` that is reached, else ``None``."""
    if iteration >= b.iterations:
        return "iterations"
    if b.frames is not None and frames >= b.frames:
        return "frames"
    if b.wall_seconds is not None and wall >= b.wall_seconds:
        return "wall"
    return None


def es_config(cfg: RunConfig, seed: int, mu: int):
    common = dict(sigma=cfg.sigma, lam=cfg.lam, seed=seed, max_iterations=cfg.budget_b.iterations,
                  frame_budget=cfg.budget_b.frames, eval_center=cfg.eval_center)
    if cfg.algorithm == "canonical":
        return CanonicalConfig(mu=mu, **common)
    return OpenAIConfig(lr=cfg.lr, weight_decay=cfg.weight_decay, optimizer=cfg.optimizer, beta1=cfg.beta1,
                        beta2=cfg.beta2, eps=cfg.adam_eps, momentum=cfg.momentum, **common)


def unit_name(cfg: RunConfig, seed: int, mu: int) -> str:
    if cfg.algorithm == "canonical" and cfg.mu_grid:
        return f"seed{seed}_mu{mu}"
    return f"seed{seed}"


def _hash_stats(stats) -> Optional[str]:
    if stats is None:
        return None
    h = hashlib.sha256()
    for a in stats.to_arrays():
        h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()


def _write_json(path: Path, obj):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True))
    tmp.replace(path)


def base_manifest(cfg: RunConfig) -> dict:
    man = {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "noise_table": {"seed": cfg.table_seed, "length": cfg.table_length, "dtype": "float32",
                        "generator": "philox4x64 box-muller"},
        "protocol_version": PROTOCOL_VERSION,
        "streams": {"reference_batch": REFERENCE_STREAM, "benchmark_init": INIT_STREAM},
        "es": {str(mu): es_config(cfg, 0, mu).to_dict() for mu in cfg.mu_values()},
        "eval": {"rollouts": cfg.eval_rollouts, "base_seed": cfg.eval_seed, "std_ddof": 0},
        "units": {},
    }
    if cfg.env in CONTROL_ENVS:
        spec = policy_spec_for(cfg)
        man["policy"] = {"spec": spec.to_dict(), "n_params": spec.n_params, "init_std": INIT_STD,
                         "bn_eps": EPS_BN}
    return man


@dataclass
class UnitOutcome:
    name: str
    seed: int
    mu: int
    rows: List[ResultRow]
    manifest: dict


class _Evaluators:
    """Builds the evaluator for one unit and owns spawned worker processes."""

    def __init__(self, cfg: RunConfig, table, fitness, task, stats, dim: int, seed: int, run_id: str):
        self.procs: List[subprocess.Popen] = []
        if cfg.transport == "inproc":
            self.ev = InProcessPool(fitness, table, cfg.workers, seed=seed, per_worker=cfg.per_worker,
                                    run_id=run_id)
            return
        host, _, port = cfg.master.rpartition(":")
        master = TcpMaster(table, dim, host=host or "127.0.0.1", port=int(port or 0), run_id=run_id, seed=seed,
                           task=task, stats=stats, fitness=fitness, per_worker=cfg.per_worker,
                           straggler_factor=cfg.straggler_factor)
        self.ev = master
        try:
            if cfg.spawn_workers:
                addr = f"{master.address[0]}:{master.address[1]}"
                for _ in range(cfg.workers):
                    self.procs.append(subprocess.Popen(
                        [sys.executable, "-m", "canonical_es", "worker", "--master", addr]))
            master.wait_for_workers(cfg.workers, timeout=120.0)
        except BaseException:
            self.close()
            raise

    def close(self):
        self.ev.close()
        for p in self.procs:
            try:
                p.wait(timeout=10)
            except subprocess.TimeoutExpired:
                p.kill()
                p.wait()


def run_unit(cfg: RunConfig, table, seed: int, mu: int, udir: Path, resume: bool = False) -> UnitOutcome:
    udir.mkdir(parents=True, exist_ok=True)
    name = unit_name(cfg, seed, mu)
    run_id = f"{cfg.name}-{name}"
    theta0 = initial_theta(cfg, seed)
    stats = reference_stats(cfg, theta0, seed)
    task = task_from_config(cfg)
    fitness = fitness_for_task(task, stats)
    es_cfg = es_config(cfg, seed, mu)

    progress = {"wall": 0.0, "budget_a": None}
    trace = []
    state: Optional[ESState] = None
    latest = udir / "latest.ckpt"
    if resume and latest.exists():
        state = load_checkpoint(latest).state
        progress = json.loads((udir / "progress.json").read_text())
        trace = [r for r in read_trace(udir / "trace.csv") if r.iteration <= state.iteration]
        log.info("%s: resuming at iteration %d", name, state.iteration)
    elif not resume:
        for stale in ("latest.ckpt", "budget_a.ckpt", "final.ckpt", "progress.json"):
            (udir / stale).unlink(missing_ok=True)

    wall0 = float(progress["wall"])
    t_start = time.perf_counter()
    skip_first = state is not None

    def snapshot_a(st: ESState, reason: str):
        save_checkpoint(udir / "budget_a.ckpt", st, stats)
        write_trace(udir / "trace_budget_a.csv", trace)
        progress["budget_a"] = {"reason": reason, "iteration": st.iteration, "frames": st.frames,
                                "wall": trace[-1].wall}

    def on_iteration(st: ESState, row):
        nonlocal skip_first
        if skip_first:
            skip_first = False
            return
        wall = wall0 + (time.perf_counter() - t_start)
        trace.append(type(row)(row.iteration, row.frames, row.best, row.mean, row.center, wall))
        write_trace(udir / "trace.csv", trace)
        save_checkpoint(latest, st, stats)
        if cfg.keep_all_checkpoints:
            save_checkpoint(udir / f"iter{st.iteration:06d}.ckpt", st, stats)
        if progress["budget_a"] is None:
            reason = budget_hit(cfg.budget_a, st.iteration, st.frames, wall)
            if reason:
                snapshot_a(st, reason)
        progress["wall"] = wall
        _write_json(udir / "progress.json", progress)

    def should_stop(st: ESState) -> bool:
        b = cfg.budget_b.wall_seconds
        return b is not None and wall0 + (time.perf_counter() - t_start) >= b

    done = state is not None and budget_hit(cfg.budget_b, state.iteration, state.frames, progress["wall"])
    if not done:
        evs = _Evaluators(cfg, table, fitness, task, stats, theta0.shape[0], seed, run_id)
        try:
            runner = run_canonical if cfg.algorithm == "canonical" else run_openai
            result = runner(es_cfg, evs.ev, table, theta0, state=state, keep_thetas=False,
                            on_iteration=on_iteration, should_stop=should_stop)
            state = result.state
        finally:
            evs.close()
    if progress["budget_a"] is None:
        # budget B ran out before any budget-A limit: both snapshots coincide
        snapshot_a(state, "end")
        _write_json(udir / "progress.json", progress)
    save_checkpoint(udir / "final.ckpt", state, stats)

    rows = []
    reports = {}
    for label, ck_name in (("A", "budget_a.ckpt"), ("B", "final.ckpt")):
        theta = load_checkpoint(udir / ck_name).theta
        rep = evaluate_fitness(fitness, theta, cfg.eval_rollouts, cfg.eval_seed, checkpoint=ck_name,
                               param_hash=param_hash(theta))
        rep.save(udir / ("eval_budget_a.json" if label == "A" else "eval_final.json"))
        reports[label] = rep
        snap = progress["budget_a"] if label == "A" else {"iteration": state.iteration, "frames": state.frames,
                                                          "wall": progress["wall"]}
        rows.append(ResultRow(run_id, cfg.algorithm, cfg.env, seed, label, rep.mean, rep.std, rep.n_effective,
                              int(snap["frames"]), round(float(snap["wall"]), 3)))
    unit_manifest = {
        "seed": seed, "mu": mu, "run_id": run_id,
        "theta0_hash": param_hash(theta0), "reference_stats_hash": _hash_stats(stats),
        "budget_a": {k: v for k, v in progress["budget_a"].items() if k != "wall"},
        "final": {"iteration": state.iteration, "frames": state.frames, "param_hash": param_hash(state.theta)},
        "eval_means": {k: r.mean for k, r in reports.items()},
    }
    return UnitOutcome(name, seed, mu, rows, unit_manifest)


def run_experiment(cfg: RunConfig, *, resume: bool = False) -> Path:
    run_dir = Path(cfg.output_dir) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(cfg.to_json())
    manifest = base_manifest(cfg)
    table = noise_table_create(cfg.table_seed, cfg.table_length)
    rows: List[ResultRow] = []
    by_mu = {}
    for mu in cfg.mu_values():
        for seed in cfg.seeds:
            name = unit_name(cfg, seed, mu)
            out = run_unit(cfg, table, seed, mu, run_dir / name, resume=resume)
            rows.extend(out.rows)
            by_mu.setdefault(mu, []).extend(out.rows)
            manifest["units"][name] = out.manifest
            log.info("%s: eval A %.3f, B %.3f", name, out.rows[0].mean, out.rows[1].mean)
    write_results(run_dir / "results.csv", rows)
    tables = []
    for mu, mu_rows in by_mu.items():
        for budget in ("A", "B"):
            head = f"budget {budget}" + (f", mu={mu}" if cfg.mu_grid else "")
            tables.append(head + "\n" + format_table([r for r in mu_rows if r.budget == budget]))
    (run_dir / "table.txt").write_text("\n\n".join(tables) + "\n")
    _write_json(run_dir / "manifest.json", manifest)
    return run_dir


__all__ = ["NoWorkersError", "budget_hit", "es_config", "run_experiment", "run_unit", "unit_name",
           "EvalReport"]
