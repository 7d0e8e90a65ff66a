"""Worker side: reconstruct perturbations locally and score them."""

from __future__ import annotations

import logging
import socket
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..checkpoint import decode_checkpoint, param_hash
from ..core import NoiseTable, noise_table_create
from ..training import WORST_SCORE, evaluate_indices
from .protocol import (Assignment, Message, MsgType, ProtocolError, ScoreReport, encode_message, hello,
                       read_message)

log = logging.getLogger(__name__)


@dataclass
class WorkerState:
    table: NoiseTable
    thetas: Dict[int, Tuple[str, np.ndarray]] = field(default_factory=dict)
    stats: object = None
    keep: int = 2

    def put_theta(self, iteration: int, theta: np.ndarray) -> str:
        h = param_hash(theta)
        self.thetas.pop(iteration, None)
        self.thetas[iteration] = (h, theta)
        while len(self.thetas) > self.keep:
            self.thetas.pop(next(iter(self.thetas)))
        return h

    def theta_for(self, a: Assignment) -> Optional[np.ndarray]:
        entry = self.thetas.get(a.iteration)
        if entry is None or entry[0] != a.theta_hash:
            return None
        return entry[1]


def worker_evaluate(a: Assignment, ws: WorkerState, fitness, worker_id: str = "local",
                    worst_score: float = WORST_SCORE) -> ScoreReport:
    theta = ws.theta_for(a)
    if theta is None:
        raise KeyError(f"no parameters cached for {a.run_id}@{a.iteration} ({a.theta_hash[:12]})")
    t0 = time.perf_counter()
    results = evaluate_indices(fitness, theta, a.sigma, ws.table, a.indices, a.slots, a.iteration,
                               a.seed, worst_score)
    return ScoreReport(a.run_id, a.iteration, tuple(results), worker_id, time.perf_counter() - t0)


class Worker:
    """TCP worker: handshake, pull parameters on demand, score assignments.

    ``fitness`` may be given directly; otherwise ``fitness_factory(task,
    stats)`` builds one from the task description the master sends.
    """

    def __init__(self, address: Tuple[str, int], *, fitness=None,
                 fitness_factory: Optional[Callable] = None, table: Optional[NoiseTable] = None,
                 worker_id: Optional[str] = None, worst_score: float = WORST_SCORE,
                 connect_timeout: float = 30.0):
        self.address = address
        self.fitness = fitness
        self.fitness_factory = fitness_factory
        self.table = table
        self.worker_id = worker_id or f"w-{uuid.uuid4().hex[:8]}"
        self.worst_score = worst_score
        self.connect_timeout = connect_timeout
        self.sock: Optional[socket.socket] = None
        self.state: Optional[WorkerState] = None
        self.task: Optional[dict] = None
        self.evaluated = 0

    def send(self, msg: Message):
        self.sock.sendall(encode_message(msg))

    def connect(self):
        deadline = time.monotonic() + self.connect_timeout
        while True:
            try:
                self.sock = socket.create_connection(self.address, timeout=5.0)
                break
            except OSError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.1)
        self.sock.settimeout(None)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        t = self.table
        self.send(hello(self.worker_id, t.seed if t else None, t.length if t else None, None))
        msg, _ = read_message(self.sock)
        if msg.type == MsgType.REJECT:
            self.sock.close()
            raise ProtocolError(f"master refused worker: {msg.payload.get('reason')}")
        if msg.type != MsgType.WELCOME:
            raise ProtocolError(f"expected WELCOME, got {msg.type.name}")
        info = msg.payload
        if self.table is None:
            self.table = noise_table_create(int(info["table_seed"]), int(info["table_length"]))
        self.task = info.get("task")
        self.state = WorkerState(self.table)
        return info

    def _ready_fitness(self):
        if self.fitness is None:
            if self.fitness_factory is None:
                raise RuntimeError("worker has neither a fitness nor a factory for the master's task")
            self.fitness = self.fitness_factory(self.task, self.state.stats)
        return self.fitness

    def handle_assignment(self, a: Assignment):
        report = worker_evaluate(a, self.state, self._ready_fitness(), self.worker_id, self.worst_score)
        self.evaluated += len(a.indices)
        self.send(report.message())

    def serve(self):
        """Process messages until SHUTDOWN or the master goes away."""
        pending: List[Assignment] = []
        requested = set()
        try:
            while True:
                msg, _ = read_message(self.sock)
                if msg.type == MsgType.SHUTDOWN:
                    return
                if msg.type == MsgType.SYNC:
                    ck = decode_checkpoint(msg.payload)
                    if ck.stats is not None:
                        self.state.stats = ck.stats
                    self.state.put_theta(ck.state.iteration, ck.state.theta)
                    ready = [a for a in pending if self.state.theta_for(a) is not None]
                    pending = [a for a in pending if a not in ready]
                    for a in ready:
                        self.handle_assignment(a)
                elif msg.type == MsgType.ASSIGN:
                    a = Assignment.from_json(msg.payload)
                    if self.state.theta_for(a) is not None:
                        self.handle_assignment(a)
                    else:
                        pending.append(a)
                        key = (a.run_id, a.iteration, a.theta_hash)
                        if key not in requested:
                            requested.add(key)
                            self.send(Message(MsgType.SYNC_REQUEST, {"run_id": a.run_id, "iteration": a.iteration,
                                                                     "theta_hash": a.theta_hash}))
                else:
                    log.warning("worker %s ignoring unexpected %s", self.worker_id, msg.type.name)
        except (ConnectionError, OSError) as exc:
            log.info("worker %s lost the master: %r", self.worker_id, exc)
        finally:
            self.close()

    def close(self):
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass

    def run(self):
        self.connect()
        self.serve()


def run_worker(address: Tuple[str, int], **kwargs) -> Worker:
    w = Worker(address, **kwargs)
    w.run()
    return w
