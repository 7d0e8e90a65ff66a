"""Parallel evaluation: an in-process pool and a TCP master/worker transport."""

from .master import NoWorkersError, TcpMaster
from .pool import InProcessPool
from .protocol import (PROTOCOL_VERSION, Assignment, Message, MsgType, ProtocolError, ScoreReport,
                       decode_message, encode_message)
from .scheduling import Collector, SchedulingError, dispatch_iteration
from .worker import Worker, WorkerState, run_worker, worker_evaluate

__all__ = [
    "PROTOCOL_VERSION", "Assignment", "Collector", "InProcessPool", "Message", "MsgType", "NoWorkersError",
    "ProtocolError", "SchedulingError", "ScoreReport", "TcpMaster", "Worker", "WorkerState",
    "decode_message", "dispatch_iteration", "encode_message", "run_worker", "worker_evaluate",
]
