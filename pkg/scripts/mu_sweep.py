"""Canonical ES on CartPole over a grid of parent counts mu at fixed lambda."""

import argparse
import json
from pathlib import Path

from canonical_es.experiment.config import RunConfig
from canonical_es.experiment.runner import run_experiment

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mu", type=int, nargs="+", default=[1, 4, 8, 16, 32])
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    base = json.loads((HERE / "configs" / "cartpole_canonical.json").read_text())
    base.update(name="cartpole_mu_sweep", mu_grid=args.mu, output_dir=args.out)
    run_dir = run_experiment(RunConfig.from_dict(base))
    print((run_dir / "table.txt").read_text())


if __name__ == "__main__":
    main()
