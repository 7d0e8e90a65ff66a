"""Command line: train, evaluate, compare, plot, worker.

Exit codes: 0 success, 1 bad configuration or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from ..checkpoint import CheckpointError, load_checkpoint, param_hash
from ..distrib import NoWorkersError, ProtocolError, run_worker
from .config import ConfigError, RunConfig
from .evaluation import EvalReport, evaluate_fitness
from .plots import emit_plots
from .report import COMPARE_FIELDS, compare_runs, format_compare_row, write_compare
from .runner import run_experiment
from .tasks import fitness_for_task, task_from_config

log = logging.getLogger("canonical_es")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


def _address(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


# ------------------------------------------------------------------ verbs

def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    overrides = {}
    if args.transport:
        overrides["transport"] = args.transport
    if args.workers:
        overrides["workers"] = args.workers
    if args.master:
        _address(args.master)
        overrides["master"] = args.master
        overrides["spawn_workers"] = False
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if overrides:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    run_dir = run_experiment(cfg, resume=args.resume)
    print((run_dir / "table.txt").read_text(), end="")
    print(f"results in {run_dir}")
    return EXIT_OK


def _config_near(checkpoint: Path) -> Path:
    for d in (checkpoint.parent, checkpoint.parent.parent):
        if (d / "config.json").exists():
            return d / "config.json"
    raise UsageError(f"no config.json next to {checkpoint}; pass --config")


def cmd_evaluate(args) -> int:
    ck_path = Path(args.checkpoint)
    cfg = RunConfig.load(args.config or _config_near(ck_path))
    try:
        ck = load_checkpoint(ck_path)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from exc
    fitness = fitness_for_task(task_from_config(cfg), ck.stats)
    base = cfg.eval_seed if args.seed is None else args.seed
    rep = evaluate_fitness(fitness, ck.theta, args.rollouts, base, checkpoint=str(ck_path),
                           param_hash=param_hash(ck.theta))
    out = Path(args.out) if args.out else ck_path.with_name(ck_path.stem + "_eval.json")
    rep.save(out)
    print(f"mean {rep.mean:.4f} std {rep.std:.4f} over {rep.n_effective} rollouts"
          + (f" ({len(rep.failed)} failed)" if rep.failed else ""))
    print(f"report written to {out}")
    return EXIT_OK


def _reports(path: Path, budget: str) -> List[EvalReport]:
    """One report per unit of a run directory, best first; or a single report file."""
    if path.is_file():
        return [EvalReport.load(path)]
    name = "eval_final.json" if budget == "B" else "eval_budget_a.json"
    found = sorted(path.glob(f"*/{name}"))
    if not found:
        raise UsageError(f"no {name} under {path}")
    reps = [EvalReport.load(p) for p in found]
    return sorted(reps, key=lambda r: -r.mean)


def cmd_compare(args) -> int:
    a = _reports(Path(args.a), args.budget)
    b = _reports(Path(args.b), args.budget)
    if len(a) != len(b):
        raise UsageError(f"cannot pair {len(a)} runs with {len(b)} runs")
    la, lb = args.label_a or Path(args.a).stem, args.label_b or Path(args.b).stem
    rows = [compare_runs(ra, rb, la, lb) for ra, rb in zip(a, b)]
    for k, row in enumerate(rows, 1):
        print(f"{k}. {format_compare_row(row)}")
    if args.out:
        write_compare(args.out, rows)
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else Path(args.trace[0]).with_suffix(".svg")
    path = emit_plots(args.trace, out, x=args.x, y=args.y, window=args.window)
    if path is None:
        print("nothing to plot", file=sys.stderr)
        return EXIT_OK
    print(f"plot written to {path}")
    return EXIT_OK


def cmd_worker(args) -> int:
    w = run_worker(_address(args.master), fitness_factory=fitness_for_task, worker_id=args.id,
                   connect_timeout=args.connect_timeout)
    log.info("worker %s done after %d offspring", w.worker_id, w.evaluated)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="canonical-es", description="Evolution strategies for policy search.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="run an experiment from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", action="store_true", help="continue from the latest checkpoints")
    t.add_argument("--transport", choices=("inproc", "tcp"))
    t.add_argument("--workers", type=int)
    t.add_argument("--master", help="listen address host:port; workers are then started separately")
    t.add_argument("--output-dir")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint over repeated rollouts")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--rollouts", type=int, default=30)
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_evaluate)

    c = sub.add_parser("compare", help="Mann-Whitney comparison of two reports or run directories")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--budget", choices=("A", "B"), default="B")
    c.add_argument("--label-a")
    c.add_argument("--label-b")
    c.add_argument("--out", help=f"CSV with columns {', '.join(COMPARE_FIELDS)}")
    c.set_defaults(fn=cmd_compare)

    pl = sub.add_parser("plot", help="SVG training curves from trace CSVs")
    pl.add_argument("--trace", required=True, nargs="+")
    pl.add_argument("--out")
    pl.add_argument("--x", choices=("iteration", "frames"), default="iteration")
    pl.add_argument("--y", choices=("center", "best", "mean"), default="center")
    pl.add_argument("--window", type=int, default=5)
    pl.set_defaults(fn=cmd_plot)

    w = sub.add_parser("worker", help="serve a TCP master")
    w.add_argument("--master", required=True)
    w.add_argument("--id")
    w.add_argument("--connect-timeout", type=float, default=30.0)
    w.set_defaults(fn=cmd_worker)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; that is a configuration error here
        return EXIT_CONFIG if exc.code == 2 else int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoWorkersError, ProtocolError, CheckpointError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
