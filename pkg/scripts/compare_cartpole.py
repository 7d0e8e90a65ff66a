"""Train both ES variants on CartPole, then compare them seed by seed.

Writes two run directories under --out, a comparison CSV and one SVG of the
training curves per algorithm.
"""

import argparse
from pathlib import Path

from canonical_es.experiment.cli import main as cli

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    runs = {}
    for algo in ("canonical", "openai"):
        code = cli(["train", "--config", str(HERE / "configs" / f"cartpole_{algo}.json"), "--output-dir", str(out),
                    "--transport", args.transport, "--workers", str(args.workers)])
        if code:
            raise SystemExit(code)
        runs[algo] = out / f"cartpole_{algo}"
    for budget in ("A", "B"):
        cli(["compare", "--a", str(runs["canonical"]), "--b", str(runs["openai"]), "--budget", budget,
             "--label-a", "canonical", "--label-b", "openai", "--out", str(out / f"compare_{budget}.csv")])
    for algo, run_dir in runs.items():
        traces = sorted(str(p) for p in run_dir.glob("*/trace.csv"))
        cli(["plot", "--trace", *traces, "--out", str(out / f"{algo}.svg"), "--x", "frames"])


if __name__ == "__main__":
    main()
