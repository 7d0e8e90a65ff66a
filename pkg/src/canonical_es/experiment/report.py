"""Result tables: per-run CSV rows, ordered seed tables and pairwise comparisons."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Sequence, Union

from ..training import TraceRow
from .evaluation import EvalReport
from .stats import mann_whitney_u

COMPARE_FIELDS = ("label_a", "label_b", "mean_a", "std_a", "mean_b", "std_b", "n_a", "n_b", "u", "p_value",
                  "winner", "significant")


@dataclass
class ResultRow:
    run_id: str
    algorithm: str
    env: str
    seed: int
    budget: str
    mean: float
    std: float
    n_rollouts: int
    frames: int
    wall_seconds: float


RESULT_FIELDS = tuple(f.name for f in fields(ResultRow))


def ordered(rows: Iterable[ResultRow]) -> List[ResultRow]:
    """Best mean first; equal means keep seed order."""
    return sorted(rows, key=lambda r: (-r.mean, r.seed))


def write_results(path: Union[str, Path], rows: Sequence[ResultRow]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
    return path


def read_results(path: Union[str, Path]) -> List[ResultRow]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [ResultRow(r["run_id"], r["algorithm"], r["env"], int(r["seed"]), r["budget"], float(r["mean"]),
                          float(r["std"]), int(r["n_rollouts"]), int(r["frames"]), float(r["wall_seconds"]))
                for r in reader]


def compare_runs(a: EvalReport, b: EvalReport, label_a: str = "a", label_b: str = "b",
                 alpha: float = 0.05) -> dict:
    """One comparison-table row; the winner is named only when the difference is significant."""
    test = mann_whitney_u(a.scores, b.scores, alpha=alpha)
    winner = ""
    if test.significant:
        if a.mean > b.mean:
            winner = label_a
        elif b.mean > a.mean:
            winner = label_b
    return {
        "label_a": label_a, "label_b": label_b,
        "mean_a": a.mean, "std_a": a.std, "mean_b": b.mean, "std_b": b.std,
        "n_a": a.n_effective, "n_b": b.n_effective,
        "u": test.u, "p_value": test.p_value,
        "winner": winner, "significant": test.significant,
    }


def format_compare_row(row: dict) -> str:
    def cell(mean, std, label):
        text = f"{mean:.2f} ± {std:.2f}"
        return f"*{text}*" if row["winner"] == label else text

    mark = " (p<0.05)" if row["significant"] else ""
    return (f"{row['label_a']}: {cell(row['mean_a'], row['std_a'], row['label_a'])} | "
            f"{row['label_b']}: {cell(row['mean_b'], row['std_b'], row['label_b'])} | "
            f"U={row['u']:g} p={row['p_value']:.4g}{mark}")


def write_compare(path: Union[str, Path], rows: Sequence[dict]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARE_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def format_table(rows: Sequence[ResultRow]) -> str:
    lines = ["rank  seed  budget  mean       std        n   frames"]
    for k, r in enumerate(ordered(rows), 1):
        lines.append(f"{k:<5} {r.seed:<5} {r.budget:<7} {r.mean:<10.3f} {r.std:<10.3f} {r.n_rollouts:<3} {r.frames}")
    return "\n".join(lines)


def write_trace(path: Union[str, Path], rows: Sequence[TraceRow]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TraceRow.FIELDS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_tuple()])
    return path


def read_trace(path: Union[str, Path]) -> List[TraceRow]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != TraceRow.FIELDS:
            raise ValueError(f"{path}: not a trace file (columns {header})")
        return [TraceRow(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5])) for r in reader]
