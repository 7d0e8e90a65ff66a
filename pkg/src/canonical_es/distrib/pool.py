"""In-process evaluation pool (threads sharing one read-only noise table)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import List

import numpy as np

from ..checkpoint import param_hash
from ..core import NoiseTable
from ..training import WORST_SCORE, ScoredOffspring, center_seed, _unpack
from .scheduling import Collector, dispatch_iteration
from .worker import WorkerState, worker_evaluate


class InProcessPool:
    """Evaluator running ``n_workers`` logical workers on a thread pool.

    Goes through the same dispatch / report / collect path as the TCP
    transport, so both produce the same scored offspring for equal seeds.
    """

    def __init__(self, fitness, table: NoiseTable, n_workers: int = 1, *, seed: int = 0,
                 per_worker: int = 2, run_id: str = "run", worst_score: float = WORST_SCORE):
        if n_workers < 1:
            raise ValueError("need at least one worker")
        self.fitness = fitness
        self.table = table
        self.seed = int(seed)
        self.per_worker = per_worker
        self.run_id = run_id
        self.worst_score = worst_score
        self.workers = [f"inproc-{i}" for i in range(n_workers)]
        self.states = {w: WorkerState(table) for w in self.workers}
        self._executor = ThreadPoolExecutor(n_workers) if n_workers > 1 else None

    def evaluate(self, theta, sigma, indices, iteration) -> List[ScoredOffspring]:
        h = param_hash(theta)
        frozen = np.array(theta, dtype=np.float32)
        frozen.setflags(write=False)
        for ws in self.states.values():
            ws.put_theta(iteration, frozen)
        plan = dispatch_iteration(indices, self.workers, per_worker=self.per_worker, run_id=self.run_id,
                                  iteration=iteration, sigma=float(sigma), theta_hash=h, seed=self.seed)

        def job(item):
            w, a = item
            return worker_evaluate(a, self.states[w], self.fitness, w, self.worst_score)

        if self._executor is None:
            reports = [job(item) for item in plan]
        else:
            reports = list(self._executor.map(job, plan))
        collector = Collector(indices)
        for r in reports:
            collector.add(r.results)
        return collector.results()

    def evaluate_center(self, theta, iteration) -> float:
        score, _ = _unpack(self.fitness(theta.astype(np.float64), center_seed(self.seed, iteration)))
        return score

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
