"""ToyFrame smoke check: an ES-trained pixel policy against uniformly random actions.

Both are scored with the evaluation protocol (30 rollouts, random no-op
starts) and compared with the Mann-Whitney U test. Expect minutes per seed.
"""

import argparse
import time

import numpy as np

from canonical_es import CanonicalConfig, noise_table_create, run_canonical
from canonical_es.envs import episode_rollout, make_env
from canonical_es.experiment.config import RunConfig
from canonical_es.experiment.evaluation import evaluate_fitness
from canonical_es.experiment.stats import mann_whitney_u
from canonical_es.experiment.tasks import fitness_for_task, initial_theta, reference_stats, task_from_config
from canonical_es.policy import LayerSpec, PolicySpec


class RandomPolicy:
    def __init__(self, episode):
        self.episode = episode

    def rollout(self, theta, seed):
        rng = np.random.default_rng(seed)
        return episode_rollout(lambda state: rng.random(3), make_env("toyframe"), self.episode, seed)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lam", type=int, default=48)
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--max-steps", type=int, default=120)
    args = ap.parse_args()

    spec = PolicySpec((84, 84, 4), (LayerSpec("conv", 4, kernel=12, stride=12),
                                    LayerSpec("dense", 3, activation="none")), 3)
    cfg = RunConfig(env="toyframe", policy=spec.to_dict(), ref_batch_size=32, ref_p_save=0.1,
                    episode={"max_steps": args.max_steps, "max_noops": 30, "frame_skip": 4, "seed": 0})
    table = noise_table_create(0, 5_000_000)
    theta0 = initial_theta(cfg, args.seed)
    fitness = fitness_for_task(task_from_config(cfg), reference_stats(cfg, theta0, args.seed))
    t0 = time.perf_counter()

    def progress(st, row):
        if st.iteration % 10 == 0:
            print(f"iteration {st.iteration:4d}  offspring mean {row.mean:.3f}  best {row.best:.1f}"
                  f"  ({time.perf_counter() - t0:.0f} s)", flush=True)

    es = CanonicalConfig(sigma=args.sigma, lam=args.lam, mu=max(1, args.lam // 4), seed=args.seed,
                         max_iterations=args.iterations)
    res = run_canonical(es, fitness, table, theta0, keep_thetas=False, on_iteration=progress)
    trained = evaluate_fitness(fitness, res.theta, 30, cfg.eval_seed)
    random = evaluate_fitness(RandomPolicy(cfg.episode), np.zeros(1), 30, cfg.eval_seed)
    test = mann_whitney_u(trained.scores, random.scores)
    print(f"trained {trained.mean:.3f} ± {trained.std:.3f}   random {random.mean:.3f} ± {random.std:.3f}   "
          f"U={test.u:g} p={test.p_value:.4g}")


if __name__ == "__main__":
    main()
