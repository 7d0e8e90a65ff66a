"""Length-prefixed wire protocol between master and workers.

Frame: 4-byte big-endian body length, then the body: 1 message-type byte
followed by a UTF-8 JSON object. ``SYNC`` is the one exception; its payload
is a checkpoint in the binary checkpoint format, so parameter vectors only
ever travel as checkpoint syncs.
"""

from __future__ import annotations

import enum
import json
import socket
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

from ..core import NoiseIndex
from ..training import ScoredOffspring

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 30
_LEN = struct.Struct(">I")


class ProtocolError(RuntimeError):
    pass


class MsgType(enum.IntEnum):
    HELLO = 1
    WELCOME = 2
    REJECT = 3
    ASSIGN = 4
    REPORT = 5
    SYNC_REQUEST = 6
    SYNC = 7
    SHUTDOWN = 8


@dataclass(frozen=True)
class Message:
    type: MsgType
    payload: Union[dict, bytes] = field(default_factory=dict)


def encode_message(msg: Message) -> bytes:
    if msg.type == MsgType.SYNC:
        if not isinstance(msg.payload, (bytes, bytearray)):
            raise ProtocolError("SYNC payload must be checkpoint bytes")
        body = bytes(msg.payload)
    else:
        body = json.dumps(msg.payload, separators=(",", ":"), allow_nan=False).encode()
    frame_len = 1 + len(body)
    if frame_len > MAX_FRAME:
        raise ProtocolError(f"frame of {frame_len} bytes exceeds limit")
    return _LEN.pack(frame_len) + bytes([int(msg.type)]) + body


def _decode_body(body: bytes) -> Message:
    if not body:
        raise ProtocolError("empty frame body")
    try:
        mtype = MsgType(body[0])
    except ValueError:
        raise ProtocolError(f"unknown message type {body[0]}") from None
    if mtype == MsgType.SYNC:
        return Message(mtype, bytes(body[1:]))
    try:
        payload = json.loads(body[1:].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON payload: {exc}") from None
    if not isinstance(payload, dict):
        raise ProtocolError("JSON payload must be an object")
    return Message(mtype, payload)


def decode_message(data: bytes) -> Message:
    """Decode exactly one frame."""
    msg, used = decode_prefix(data)
    if msg is None:
        raise ProtocolError(f"truncated frame ({len(data)} bytes)")
    if used != len(data):
        raise ProtocolError(f"{len(data) - used} trailing bytes after frame")
    return msg


def decode_prefix(data: bytes) -> Tuple[Optional[Message], int]:
    """Decode the first frame of ``data`` if complete; returns ``(msg or None, bytes used)``."""
    if len(data) < _LEN.size:
        return None, 0
    (n,) = _LEN.unpack_from(data, 0)
    if n == 0 or n > MAX_FRAME:
        raise ProtocolError(f"bad frame length {n}")
    end = _LEN.size + n
    if len(data) < end:
        return None, 0
    return _decode_body(data[_LEN.size:end]), end


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed mid-frame" if chunks or remaining != n else "connection closed")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> Tuple[Message, int]:
    """Blocking read of one frame; returns the message and its wire size."""
    header = _recv_exact(sock, _LEN.size)
    (n,) = _LEN.unpack(header)
    if n == 0 or n > MAX_FRAME:
        raise ProtocolError(f"bad frame length {n}")
    body = _recv_exact(sock, n)
    return _decode_body(body), _LEN.size + n


@dataclass(frozen=True)
class Assignment:
    run_id: str
    iteration: int
    indices: Tuple[NoiseIndex, ...]
    slots: Tuple[int, ...]
    sigma: float
    theta_hash: str
    seed: int

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id, "iteration": self.iteration,
            "indices": [i.to_json() for i in self.indices], "slots": list(self.slots),
            "sigma": self.sigma, "theta_hash": self.theta_hash, "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Assignment":
        return cls(str(obj["run_id"]), int(obj["iteration"]),
                   tuple(NoiseIndex.from_json(i) for i in obj["indices"]),
                   tuple(int(s) for s in obj["slots"]), float(obj["sigma"]),
                   str(obj["theta_hash"]), int(obj["seed"]))

    def message(self) -> Message:
        return Message(MsgType.ASSIGN, self.to_json())


@dataclass(frozen=True)
class ScoreReport:
    run_id: str
    iteration: int
    results: Tuple[ScoredOffspring, ...]
    worker_id: str
    wall: float = 0.0

    def to_json(self) -> dict:
        return {"run_id": self.run_id, "iteration": self.iteration,
                "results": [r.to_json() for r in self.results],
                "worker_id": self.worker_id, "wall": self.wall}

    @classmethod
    def from_json(cls, obj: dict) -> "ScoreReport":
        return cls(str(obj["run_id"]), int(obj["iteration"]),
                   tuple(ScoredOffspring.from_json(r) for r in obj["results"]),
                   str(obj["worker_id"]), float(obj.get("wall", 0.0)))

    def message(self) -> Message:
        return Message(MsgType.REPORT, self.to_json())


def hello(worker_id: str, table_seed=None, table_length=None, dim=None,
          version: int = PROTOCOL_VERSION) -> Message:
    return Message(MsgType.HELLO, {"version": version, "worker_id": worker_id, "table_seed": table_seed,
                                   "table_length": table_length, "dim": dim})


def handshake_mismatch(payload: dict, *, table_seed: int, table_length: int, dim: int) -> List[str]:
    """Reasons to refuse a HELLO; empty when compatible. ``None`` fields adopt the master's values."""
    problems = []
    if payload.get("version") != PROTOCOL_VERSION:
        problems.append(f"protocol version {payload.get('version')} != {PROTOCOL_VERSION}")
    for key, want in (("table_seed", table_seed), ("table_length", table_length), ("dim", dim)):
        got = payload.get(key)
        if got is not None and got != want:
            problems.append(f"{key} {got} != {want}")
    return problems
