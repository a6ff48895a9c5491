"""Wire protocol v1: length-prefixed JSON frames between master and workers.

A frame is a 4-byte big-endian payload length followed by the UTF-8 payload.
The payload is a single JSON object terminated by a newline.
"""
from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass, field

from .costs import DEFAULT_REGISTRY, build_plan, check_objectives, get_registry
from .dp import WorkerStats, worker_optimize
from .errors import InvalidArguments
from .model import Plan, PlanSpace, Query, parse_prefix, to_prefix
from .partitioning import PartitionSpec

VERSION = 1
HEADER = struct.Struct("!I")
MAX_FRAME = 1 << 30


class FrameError(IOError):
    pass


def frame(payload: bytes) -> bytes:
    return HEADER.pack(len(payload)) + payload


def unframe(data: bytes) -> bytes:
    if len(data) < HEADER.size:
        raise FrameError("short frame header")
    (length,) = HEADER.unpack_from(data)
    if len(data) != HEADER.size + length:
        raise FrameError(f"frame declares {length} bytes, carries {len(data) - HEADER.size}")
    return data[HEADER.size:]


def _recv_exact(sock: socket.socket, length: int) -> bytes:
    chunks = []
    remaining = length
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 16))
        if not chunk:
            raise FrameError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def send_frame(sock: socket.socket, payload: bytes) -> int:
    data = frame(payload)
    sock.sendall(data)
    return len(data)


def recv_frame(sock: socket.socket) -> bytes:
    (length,) = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes exceeds limit")
    return _recv_exact(sock, length)


def _dumps(obj) -> bytes:
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


def _loads(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"malformed payload: {exc}") from None
    if not isinstance(obj, dict) or obj.get("version") != VERSION:
        raise FrameError("payload is not a v1 message")
    return obj


@dataclass(frozen=True)
class PartitionTask:
    query: Query
    part_id: int
    num_parts: int
    space: PlanSpace
    objectives: int = 1
    alpha: float = 10.0
    cost_model: str = DEFAULT_REGISTRY.name

    def spec(self) -> PartitionSpec:
        return PartitionSpec(self.part_id, self.num_parts, self.space)

    def encode(self) -> bytes:
        return _dumps({
            "version": VERSION,
            "part_id": self.part_id,
            "num_parts": self.num_parts,
            "space": PlanSpace.parse(self.space).value,
            "objectives": self.objectives,
            "alpha": self.alpha,
            "cost_model": self.cost_model,
            "query": self.query.to_dict(),
        })

    @classmethod
    def decode(cls, payload: bytes) -> "PartitionTask":
        obj = _loads(payload)
        try:
            return cls(
                Query.from_dict(obj["query"]),
                int(obj["part_id"]),
                int(obj["num_parts"]),
                PlanSpace.parse(obj["space"]),
                int(obj["objectives"]),
                float(obj["alpha"]),
                str(obj["cost_model"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameError(f"malformed task: {exc}") from None


def encode_plan(plan: Plan) -> dict:
    return {"tree": to_prefix(plan), "cost": list(plan.cost), "card": plan.card}


def decode_plan(data: dict, q: Query, objectives: int, cost_model: str) -> Plan:
    """Rebuild a plan and check the transmitted cost against a fresh recomputation."""
    plan = build_plan(q, parse_prefix(data["tree"]), objectives, get_registry(cost_model))
    if list(plan.cost) != list(data["cost"]) or plan.card != data["card"]:
        raise FrameError(f"plan {data['tree']} carries inconsistent cost or cardinality")
    return plan


@dataclass
class PartitionResult:
    part_id: int
    plans: list[Plan]
    stats: WorkerStats = field(default_factory=WorkerStats)

    def encode(self) -> bytes:
        return _dumps({
            "version": VERSION,
            "part_id": self.part_id,
            "plans": [encode_plan(p) for p in self.plans],
            "stats": self.stats.to_dict(),
        })

    @classmethod
    def decode(cls, payload: bytes, task: PartitionTask) -> "PartitionResult":
        obj = _loads(payload)
        if "error" in obj:
            raise FrameError(f"worker reported: {obj['error']}")
        try:
            plans = [decode_plan(p, task.query, task.objectives, task.cost_model)
                     for p in obj["plans"]]
            return cls(int(obj["part_id"]), plans, WorkerStats.from_dict(obj["stats"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameError(f"malformed result: {exc}") from None


def error_payload(part_id, message: str) -> bytes:
    return _dumps({"version": VERSION, "part_id": part_id, "error": message})


def run_task(task: PartitionTask) -> PartitionResult:
    check_objectives(task.objectives)
    registry = get_registry(task.cost_model)
    plans, stats = worker_optimize(task.query, task.spec(), task.objectives, registry, task.alpha)
    return PartitionResult(task.part_id, plans, stats)


def handle_request(payload: bytes) -> bytes:
    """Worker side of one round trip: decode task, optimize, encode result.

    Bad input becomes an error payload rather than an exception so remote
    workers can report it.
    """
    try:
        task = PartitionTask.decode(payload)
    except FrameError as exc:
        return error_payload(None, str(exc))
    try:
        return run_task(task).encode()
    except InvalidArguments as exc:
        return error_payload(task.part_id, str(exc))
