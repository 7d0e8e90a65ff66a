"""TCP master: hands out noise indices, serves parameter syncs, gathers scores.

Per iteration only indices (out) and scores (back) are exchanged with each
worker, plus one checkpoint pull per worker. A worker that disconnects has
its outstanding offspring re-dispatched at once; if the iteration overruns
the straggler timeout, every missing offspring is re-dispatched to the live
workers. The first report for a slot wins.
"""

from __future__ import annotations

import logging
import queue
import socket
import statistics
import threading
import time
from collections import Counter
from typing import Dict, List, Optional, Set

import numpy as np

from ..checkpoint import encode_checkpoint, param_hash
from ..core import NoiseTable
from ..training import WORST_SCORE, ESState, ScoredOffspring, _unpack, center_seed
from .protocol import (Assignment, Message, MsgType, ProtocolError, ScoreReport, encode_message,
                       handshake_mismatch, read_message)
from .scheduling import Collector, SchedulingError, dispatch_iteration

log = logging.getLogger(__name__)


class NoWorkersError(SchedulingError):
    pass


class _Conn:
    def __init__(self, sock: socket.socket, peer):
        self.sock = sock
        self.peer = peer
        self.worker_id: Optional[str] = None
        self.alive = True
        self.lock = threading.Lock()

    def __repr__(self):
        return f"<worker {self.worker_id or '?'} {self.peer}>"


class TcpMaster:
    def __init__(self, table: NoiseTable, dim: int, *, host: str = "127.0.0.1", port: int = 0,
                 run_id: str = "run", seed: int = 0, task: Optional[dict] = None, stats=None,
                 fitness=None, per_worker: int = 2, initial_timeout: float = 120.0,
                 straggler_factor: float = 10.0, min_timeout: float = 2.0, abort_after: float = 30.0,
                 worst_score: float = WORST_SCORE):
        self.table = table
        self.dim = int(dim)
        self.run_id = run_id
        self.seed = int(seed)
        self.task = task
        self.stats = stats
        self.fitness = fitness
        self.per_worker = per_worker
        self.initial_timeout = initial_timeout
        self.straggler_factor = straggler_factor
        self.min_timeout = min_timeout
        self.abort_after = abort_after
        self.worst_score = worst_score
        self.events: "queue.Queue" = queue.Queue()
        self.conns: List[_Conn] = []
        self._conns_lock = threading.Lock()
        self.durations: List[float] = []
        self.bytes_sent: Counter = Counter()
        self.bytes_received: Counter = Counter()
        self.redispatched = 0
        self._closed = False
        self._blob: Optional[bytes] = None
        self._blob_iteration: Optional[int] = None
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.5)
        self.address = self._server.getsockname()[:2]
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    # ------------------------------------------------------------------ io

    def _send(self, conn: _Conn, msg: Message) -> bool:
        data = encode_message(msg)
        try:
            with conn.lock:
                conn.sock.sendall(data)
        except OSError as exc:
            log.info("send to %r failed: %r", conn, exc)
            self._drop(conn)
            return False
        self.bytes_sent[msg.type.name] += len(data)
        return True

    def _drop(self, conn: _Conn):
        if conn.alive:
            conn.alive = False
            try:
                conn.sock.close()
            except OSError:
                pass
            self.events.put(("gone", conn, None))

    def _accept_loop(self):
        while not self._closed:
            try:
                sock, peer = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Conn(sock, peer)
            threading.Thread(target=self._reader, args=(conn,), daemon=True).start()

    def _reader(self, conn: _Conn):
        try:
            msg, n = read_message(conn.sock)
            self.bytes_received[msg.type.name] += n
            if msg.type != MsgType.HELLO:
                raise ProtocolError(f"expected HELLO, got {msg.type.name}")
            problems = handshake_mismatch(msg.payload, table_seed=self.table.seed,
                                          table_length=self.table.length, dim=self.dim)
            if problems:
                self._send(conn, Message(MsgType.REJECT, {"reason": "; ".join(problems)}))
                conn.alive = False
                conn.sock.close()
                log.warning("refused worker %s: %s", msg.payload.get("worker_id"), problems)
                return
            conn.worker_id = str(msg.payload.get("worker_id"))
            self._send(conn, Message(MsgType.WELCOME, {
                "run_id": self.run_id, "table_seed": self.table.seed, "table_length": self.table.length,
                "dim": self.dim, "task": self.task}))
            with self._conns_lock:
                self.conns.append(conn)
            self.events.put(("joined", conn, None))
            while conn.alive:
                msg, n = read_message(conn.sock)
                self.bytes_received[msg.type.name] += n
                self.events.put(("msg", conn, msg))
        except (ConnectionError, OSError, ProtocolError) as exc:
            if conn.alive:
                log.info("connection %r closed: %r", conn, exc)
            self._drop(conn)

    # ------------------------------------------------------------ workers

    def live_workers(self) -> List[_Conn]:
        with self._conns_lock:
            return [c for c in self.conns if c.alive]

    def wait_for_workers(self, n: int, timeout: float = 60.0) -> int:
        deadline = time.monotonic() + timeout
        while len(self.live_workers()) < n:
            if time.monotonic() > deadline:
                raise NoWorkersError(f"only {len(self.live_workers())} of {n} workers connected")
            time.sleep(0.02)
        return len(self.live_workers())

    def straggler_timeout(self) -> float:
        if not self.durations:
            return self.initial_timeout
        return max(self.min_timeout, self.straggler_factor * statistics.median(self.durations))

    # --------------------------------------------------------- evaluation

    def _assign(self, slots: List[int], indices, iteration, sigma, h, outstanding: Dict[_Conn, Set[int]]):
        live = self.live_workers()
        if not live:
            return False
        plan = dispatch_iteration([indices[s] for s in slots], live, slots=slots, per_worker=self.per_worker,
                                  run_id=self.run_id, iteration=iteration, sigma=float(sigma),
                                  theta_hash=h, seed=self.seed)
        for conn, a in plan:
            if self._send(conn, a.message()):
                outstanding.setdefault(conn, set()).update(a.slots)
        return True

    def evaluate(self, theta, sigma, indices, iteration) -> List[ScoredOffspring]:
        indices = list(indices)
        h = param_hash(theta)
        self._blob = encode_checkpoint(ESState(np.asarray(theta, dtype=np.float32), float(sigma), iteration),
                                       self.stats)
        self._blob_iteration = iteration
        collector = Collector(indices)
        outstanding: Dict[_Conn, Set[int]] = {}
        t0 = time.monotonic()
        if not self._assign(list(range(len(indices))), indices, iteration, sigma, h, outstanding):
            raise NoWorkersError("no live workers at iteration start")
        timeout = self.straggler_timeout()
        deadline = t0 + timeout
        orphaned_since = None
        while not collector.complete:
            try:
                kind, conn, msg = self.events.get(timeout=max(0.0, min(deadline - time.monotonic(), 0.5)))
            except queue.Empty:
                kind = None
            if kind == "msg":
                if msg.type == MsgType.REPORT:
                    report = ScoreReport.from_json(msg.payload)
                    if report.run_id == self.run_id and report.iteration == iteration:
                        collector.add(report.results)
                        outstanding.get(conn, set()).difference_update(r.slot for r in report.results)
                elif msg.type == MsgType.SYNC_REQUEST:
                    self._send(conn, Message(MsgType.SYNC, self._blob))
                else:
                    log.warning("master ignoring %s from %r", msg.type.name, conn)
            elif kind == "gone":
                lost = sorted(s for s in outstanding.pop(conn, set()) if s in collector.missing())
                if lost:
                    log.warning("%r died holding %d offspring; re-dispatching", conn, len(lost))
                    self.redispatched += len(lost)
                    self._assign(lost, indices, iteration, sigma, h, outstanding)
            if collector.complete:
                break
            now = time.monotonic()
            if not self.live_workers():
                orphaned_since = orphaned_since or now
                if now - orphaned_since > self.abort_after:
                    raise NoWorkersError(f"all workers lost with {len(collector.missing())} offspring missing")
                continue
            if orphaned_since is not None:
                # workers came back: hand them whatever is still missing
                orphaned_since = None
                self._assign(collector.missing(), indices, iteration, sigma, h, outstanding)
                deadline = now + timeout
            elif now >= deadline:
                missing = collector.missing()
                log.warning("iteration %d straggling after %.1fs; re-dispatching %d offspring",
                            iteration, timeout, len(missing))
                self.redispatched += len(missing)
                self._assign(missing, indices, iteration, sigma, h, outstanding)
                deadline = now + timeout
        self.durations.append(time.monotonic() - t0)
        return collector.results()

    def evaluate_center(self, theta, iteration) -> float:
        if self.fitness is None:
            return float("nan")
        score, _ = _unpack(self.fitness(theta.astype(np.float64), center_seed(self.seed, iteration)))
        return score

    def traffic(self) -> Dict[str, int]:
        out = Counter(self.bytes_sent)
        out.update(self.bytes_received)
        return dict(out)

    def close(self):
        if self._closed:
            return
        for conn in self.live_workers():
            self._send(conn, Message(MsgType.SHUTDOWN, {}))
        self._closed = True
        try:
            self._server.close()
        except OSError:
            pass
        for conn in list(self.conns):
            conn.alive = False
            try:
                conn.sock.close()
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
