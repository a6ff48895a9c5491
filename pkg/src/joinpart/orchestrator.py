"""Master side: one task per partition, one result back, merge.

Every backend moves framed bytes, including the in-process ones, so byte and
message counts mean the same thing everywhere.
"""
from __future__ import annotations

import logging
import os
import socket
import socketserver
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

from .dp import WorkerStats, dominates
from .errors import InvalidArguments, WorkerFailure
from .model import Plan, PlanSpace, Query
from .partitioning import max_workers, round_workers
from .wire import (
    FrameError,
    PartitionResult,
    PartitionTask,
    frame,
    handle_request,
    recv_frame,
    send_frame,
    unframe,
)

log = logging.getLogger(__name__)

BACKENDS = ("threads", "processes", "sockets")


@dataclass
class RunReport:
    global_best: list[Plan]
    m: int
    requested_m: int
    master_wall_time: float
    max_worker_wall_time: float
    total_bytes_sent: int
    messages: int
    per_worker_stats: list[WorkerStats] = field(default_factory=list)

    @property
    def best_cost(self) -> tuple[float, ...]:
        return self.global_best[0].cost


def effective_workers(requested: int, n: int, space: PlanSpace) -> int:
    """Round down to a power of two; refuse counts the query can't be split into."""
    m = round_workers(requested)
    if m != requested:
        log.warning("worker count %d rounded down to %d", requested, m)
    limit = max_workers(n, space)
    if m > limit:
        raise InvalidArguments(
            f"{m} workers exceed the {limit} partitions a {PlanSpace.parse(space).value} "
            f"space over {n} tables supports"
        )
    return m


def final_prune(results: list[PartitionResult], objectives: int) -> list[Plan]:
    """Merge partition results.

    One metric: cheapest plan, ties to the lowest partition id.  Two metrics:
    every returned plan that no other returned plan dominates (equal cost
    vectors keep the first seen).
    """
    if not results:
        raise InvalidArguments("nothing to merge")
    ordered = sorted(results, key=lambda r: r.part_id)
    if objectives == 1:
        best = None
        for r in ordered:
            for p in r.plans:
                if best is None or p.cost[0] < best.cost[0]:
                    best = p
        return [best]
    merged: list[Plan] = []
    for r in ordered:
        for p in r.plans:
            if any(dominates(k.cost, p.cost) for k in merged):
                continue
            merged = [k for k in merged if not dominates(p.cost, k.cost)]
            merged.append(p)
    return merged


def _local_round_trip(request: bytes) -> bytes:
    return frame(handle_request(unframe(request)))


def _remote_round_trip(endpoint: tuple[str, int], request: bytes, timeout: float | None) -> bytes:
    with socket.create_connection(endpoint, timeout=timeout) as sock:
        sock.sendall(request)
        return frame(recv_frame(sock))


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise InvalidArguments(f"endpoint must look like host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _collect(futures: dict, tasks: dict[int, PartitionTask]) -> tuple[list[PartitionResult], int]:
    results = []
    received = 0
    for fut in as_completed(futures):
        part_id = futures[fut]
        try:
            response = fut.result()
        except (OSError, FrameError) as exc:
            raise WorkerFailure(part_id, str(exc)) from exc
        except Exception as exc:  # noqa: BLE001 - anything a worker raises aborts the run
            raise WorkerFailure(part_id, f"{type(exc).__name__}: {exc}") from exc
        received += len(response)
        try:
            result = PartitionResult.decode(unframe(response), tasks[part_id])
        except FrameError as exc:
            raise WorkerFailure(part_id, str(exc)) from exc
        if result.part_id != part_id:
            raise WorkerFailure(part_id, f"response names partition {result.part_id}")
        results.append(result)
    return results, received


def dispatch_local(requests: dict[int, bytes], tasks, executor: Executor):
    futures = {executor.submit(_local_round_trip, req): pid for pid, req in requests.items()}
    return _collect(futures, tasks)


def dispatch_remote(endpoints, requests: dict[int, bytes], tasks, timeout: float | None = 300.0):
    """Send each framed task to ``endpoints[part_id % len(endpoints)]`` on its own connection."""
    if not endpoints:
        raise InvalidArguments("socket backend needs at least one endpoint")
    endpoints = [parse_endpoint(e) if isinstance(e, str) else e for e in endpoints]
    with ThreadPoolExecutor(max_workers=len(requests)) as pool:
        futures = {
            pool.submit(_remote_round_trip, endpoints[pid % len(endpoints)], req, timeout): pid
            for pid, req in requests.items()
        }
        return _collect(futures, tasks)


def master_optimize(
    q: Query,
    m: int,
    space: PlanSpace,
    objectives: int = 1,
    backend: str = "threads",
    alpha: float = 10.0,
    cost_model: str = "default",
    endpoints=None,
    timeout: float | None = 300.0,
) -> RunReport:
    """Optimize ``q`` over ``m`` partitions and merge the partition optima."""
    space = PlanSpace.parse(space)
    if backend not in BACKENDS:
        raise InvalidArguments(f"unknown backend {backend!r}; choose from {BACKENDS}")
    start = time.perf_counter()
    eff = effective_workers(m, q.n, space)
    tasks = {
        pid: PartitionTask(q, pid, eff, space, objectives, alpha, cost_model)
        for pid in range(eff)
    }
    requests = {pid: frame(t.encode()) for pid, t in tasks.items()}
    sent = sum(len(r) for r in requests.values())
    if backend == "sockets":
        results, received = dispatch_remote(endpoints, requests, tasks, timeout)
    else:
        pool_cls = ThreadPoolExecutor if backend == "threads" else ProcessPoolExecutor
        workers = eff if backend == "threads" else min(eff, os.cpu_count() or 1)
        with pool_cls(max_workers=workers) as pool:
            results, received = dispatch_local(requests, tasks, pool)
    results.sort(key=lambda r: r.part_id)
    best = final_prune(results, objectives)
    return RunReport(
        global_best=best,
        m=eff,
        requested_m=m,
        master_wall_time=time.perf_counter() - start,
        max_worker_wall_time=max(r.stats.wall_time for r in results),
        total_bytes_sent=sent + received,
        messages=len(requests) + len(results),
        per_worker_stats=[r.stats for r in results],
    )


# -- socket worker -------------------------------------------------------------


class _WorkerHandler(socketserver.BaseRequestHandler):
    def handle(self):
        while True:
            try:
                payload = recv_frame(self.request)
            except (FrameError, OSError):
                return
            send_frame(self.request, handle_request(payload))


class WorkerServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


def make_worker_server(host: str = "127.0.0.1", port: int = 0) -> WorkerServer:
    return WorkerServer((host, port), _WorkerHandler)


def serve_worker(port: int, host: str = "127.0.0.1", announce=print) -> None:
    """Answer framed tasks until interrupted; announces ``listening on host:port``."""
    with make_worker_server(host, port) as server:
        h, p = server.server_address[:2]
        announce(f"listening on {h}:{p}")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
