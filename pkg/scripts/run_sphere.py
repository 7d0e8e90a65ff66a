"""Both ES variants on a benchmark objective; prints f(theta_T) / f(theta_0) per seed."""

import argparse
import time

import numpy as np

from canonical_es import CanonicalConfig, OpenAIConfig, noise_table_create, run_canonical, run_openai
from canonical_es.envs import rosenbrock_eval, sphere_eval
from canonical_es.experiment.config import RunConfig
from canonical_es.experiment.tasks import initial_theta
from canonical_es.training import fitness_from_function

OBJECTIVES = {"sphere": sphere_eval, "rosenbrock": rosenbrock_eval}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--objective", choices=sorted(OBJECTIVES), default="sphere")
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--lam", type=int, default=100)
    ap.add_argument("--mu", type=int, default=10)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--iterations", type=int, default=500)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    fn = OBJECTIVES[args.objective]
    fitness = fitness_from_function(fn)
    table = noise_table_create(0, 10_000_000)
    for algo in ("canonical", "openai"):
        ratios = []
        t0 = time.perf_counter()
        for seed in range(args.seeds):
            theta0 = initial_theta(RunConfig(env=args.objective, dim=args.dim, lam=args.lam, mu=args.mu), seed)
            if algo == "canonical":
                cfg = CanonicalConfig(sigma=args.sigma, lam=args.lam, mu=args.mu, seed=seed,
                                      max_iterations=args.iterations)
                res = run_canonical(cfg, fitness, table, theta0, keep_thetas=False)
            else:
                cfg = OpenAIConfig(sigma=args.sigma, lam=args.lam + args.lam % 2, lr=args.lr, seed=seed,
                                   max_iterations=args.iterations)
                res = run_openai(cfg, fitness, table, theta0, keep_thetas=False)
            ratios.append(fn(res.theta) / fn(theta0))
        wall = time.perf_counter() - t0
        print(f"{algo:9s} median ratio {np.median(ratios):.3e}  per seed "
              + " ".join(f"{r:.2e}" for r in ratios) + f"  ({wall:.1f} s)")


if __name__ == "__main__":
    main()
