import socket
import threading

import pytest

from joinpart.costs import build_plan
from joinpart.dp import WorkerStats
from joinpart.errors import InvalidArguments, WorkerFailure
from joinpart.model import parse_prefix, to_prefix
from joinpart.orchestrator import (
    effective_workers,
    final_prune,
    make_worker_server,
    master_optimize,
    parse_endpoint,
)
from joinpart.verify import local_workers
from joinpart.wire import (
    FrameError,
    PartitionResult,
    PartitionTask,
    decode_plan,
    encode_plan,
    frame,
    handle_request,
    recv_frame,
    send_frame,
    unframe,
)
from joinpart.workload import brute_force_oracle, generate_star_query, serial_baseline


class FakePlan:
    def __init__(self, *cost):
        self.cost = cost


def results(*buckets):
    return [PartitionResult(i, [FakePlan(*c) for c in b]) for i, b in enumerate(buckets)]


# -- final prune ---------------------------------------------------------------


def test_final_prune_single_objective_tie_goes_to_lowest_part():
    res = results([(5.0,)], [(3.0,)], [(7.0,)], [(3.0,)])
    (best,) = final_prune(res, 1)
    assert best is res[1].plans[0]


def test_final_prune_keeps_tradeoffs():
    merged = final_prune(results([(10.0, 1.0)], [(5.0, 50.0)]), 2)
    assert sorted(p.cost for p in merged) == [(5.0, 50.0), (10.0, 1.0)]


def test_final_prune_drops_dominated():
    merged = final_prune(results([(10.0, 1.0), (5.0, 50.0)], [(4.0, 40.0)]), 2)
    assert sorted(p.cost for p in merged) == [(4.0, 40.0), (10.0, 1.0)]


def test_final_prune_needs_input():
    with pytest.raises(InvalidArguments):
        final_prune([], 1)


# -- worker counts -------------------------------------------------------------


def test_effective_workers_rounds_and_bounds():
    assert effective_workers(3, 8, "linear") == 2
    assert effective_workers(16, 8, "linear") == 16
    with pytest.raises(InvalidArguments):
        effective_workers(4, 4, "bushy")
    with pytest.raises(InvalidArguments):
        effective_workers(0, 4, "linear")


def test_report_records_rounding():
    rep = master_optimize(generate_star_query(6, 0), 3, "linear")
    assert (rep.requested_m, rep.m, rep.messages) == (3, 2, 4)


# -- correctness ---------------------------------------------------------------


@pytest.mark.parametrize("space", ["linear", "bushy"])
def test_single_worker_equals_serial(space):
    q = generate_star_query(8, 5)
    rep = master_optimize(q, 1, space)
    (serial,) = serial_baseline(q, space)
    assert rep.best_cost == serial.cost
    assert to_prefix(rep.global_best[0]) == to_prefix(serial)


def test_four_workers_reach_the_optimum():
    q = generate_star_query(4, 9)
    rep = master_optimize(q, 4, "linear")
    assert rep.best_cost[0] == pytest.approx(brute_force_oracle(q, "linear").cost, rel=1e-12)


@pytest.mark.parametrize("space,n,ms", [("linear", 7, (1, 2, 4, 8)), ("bushy", 7, (1, 2, 4))])
def test_all_worker_counts_agree(space, n, ms):
    for seed in range(3):
        q = generate_star_query(n, seed)
        costs = {master_optimize(q, m, space).best_cost for m in ms}
        assert len(costs) == 1


def test_multi_objective_alpha_coverage_over_partitions():
    q = generate_star_query(7, 2)
    front = brute_force_oracle(q, "linear", objectives=2).front
    for m in (1, 2, 4):
        plans = master_optimize(q, m, "linear", objectives=2, alpha=10).global_best
        for f in front:
            assert any(all(c <= 10 * x for c, x in zip(p.cost, f)) for p in plans)


# -- messages and bytes --------------------------------------------------------


def test_two_messages_per_worker_and_bytes_grow_linearly():
    q = generate_star_query(10, 0)
    reps = {m: master_optimize(q, m, "linear") for m in (1, 2, 4)}
    for m, rep in reps.items():
        assert rep.messages == 2 * m
        assert len(rep.per_worker_stats) == m
    assert reps[4].total_bytes_sent / reps[2].total_bytes_sent <= 2.2
    assert reps[2].total_bytes_sent > reps[1].total_bytes_sent


# -- wire ----------------------------------------------------------------------


def test_frame_round_trip():
    assert unframe(frame(b"abc")) == b"abc"
    assert frame(b"abc")[:4] == b"\x00\x00\x00\x03"
    with pytest.raises(FrameError):
        unframe(b"\x00\x00\x00\x05abc")
    with pytest.raises(FrameError):
        unframe(b"\x00")


def test_task_and_result_round_trip(star6):
    task = PartitionTask(star6, 1, 4, "bushy", 2, 3.0, "default")
    again = PartitionTask.decode(task.encode())
    assert again == task
    res = PartitionResult.decode(handle_request(task.encode()), task)
    assert res.part_id == 1
    assert res.plans and all(p.result_set == star6.all_tables for p in res.plans)
    assert PartitionResult.decode(res.encode(), task).plans == res.plans


def test_payload_is_one_json_line(star6):
    data = PartitionTask(star6, 0, 1, "linear").encode()
    assert data.endswith(b"\n") and data.count(b"\n") == 1


def test_decode_plan_checks_cost(star6):
    (plan,) = serial_baseline(star6, "linear")
    data = encode_plan(plan)
    assert decode_plan(data, star6, 1, "default") == plan
    with pytest.raises(FrameError):
        decode_plan({**data, "cost": [data["cost"][0] * 2]}, star6, 1, "default")


def test_plan_prefix_round_trip(star6):
    (plan,) = serial_baseline(star6, "bushy")
    assert build_plan(star6, parse_prefix(to_prefix(plan)), 1) == plan


def test_worker_reports_bad_task_as_error():
    with pytest.raises(FrameError, match="worker reported"):
        task = PartitionTask(generate_star_query(4, 0), 0, 8, "bushy")
        PartitionResult.decode(handle_request(task.encode()), task)
    with pytest.raises(FrameError):
        PartitionResult.decode(handle_request(b"not json"), task)


def test_stats_round_trip():
    s = WorkerStats(1, 2, 3, 4, 5, 0.5)
    assert WorkerStats.from_dict(s.to_dict()) == s


def test_parse_endpoint():
    assert parse_endpoint("localhost:9") == ("localhost", 9)
    assert parse_endpoint(":9") == ("127.0.0.1", 9)
    with pytest.raises(InvalidArguments):
        parse_endpoint("localhost")


# -- sockets -------------------------------------------------------------------


@pytest.fixture
def socket_workers():
    servers = [make_worker_server() for _ in range(2)]
    threads = [threading.Thread(target=s.serve_forever, daemon=True) for s in servers]
    for t in threads:
        t.start()
    yield [f"{s.server_address[0]}:{s.server_address[1]}" for s in servers]
    for s in servers:
        s.shutdown()
        s.server_close()


@pytest.mark.parametrize("space,n,m", [("linear", 9, 4), ("bushy", 7, 4), ("linear", 6, 1)])
def test_socket_backend_matches_threads(socket_workers, space, n, m):
    q = generate_star_query(n, 4)
    a = master_optimize(q, m, space)
    b = master_optimize(q, m, space, backend="sockets", endpoints=socket_workers)
    assert a.best_cost == b.best_cost
    assert [to_prefix(p) for p in a.global_best] == [to_prefix(p) for p in b.global_best]
    assert a.messages == b.messages
    # results carry a wall-time float whose printed length varies run to run
    assert abs(a.total_bytes_sent - b.total_bytes_sent) <= 4 * a.messages


def test_socket_worker_serves_several_frames_per_connection(socket_workers, star6):
    host, port = parse_endpoint(socket_workers[0])
    with socket.create_connection((host, port), timeout=30) as sock:
        for pid in range(2):
            task = PartitionTask(star6, pid, 2, "linear")
            send_frame(sock, task.encode())
            assert PartitionResult.decode(recv_frame(sock), task).part_id == pid


def test_process_backend_matches_threads():
    q = generate_star_query(8, 1)
    a = master_optimize(q, 4, "bushy", objectives=2)
    b = master_optimize(q, 4, "bushy", objectives=2, backend="processes")
    assert [p.cost for p in a.global_best] == [p.cost for p in b.global_best]


def test_socket_backend_needs_endpoints(star6):
    with pytest.raises(InvalidArguments):
        master_optimize(star6, 2, "linear", backend="sockets", endpoints=[])
    with pytest.raises(InvalidArguments):
        master_optimize(star6, 2, "linear", backend="carrier-pigeon")


class _Hangup:
    """Accepts connections, reads a little, and closes without answering."""

    def __init__(self):
        self.sock = socket.create_server(("127.0.0.1", 0))
        self.endpoint = f"127.0.0.1:{self.sock.getsockname()[1]}"
        self.thread = threading.Thread(target=self._serve, daemon=True)
        self.thread.start()

    def _serve(self):
        while True:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            conn.recv(4)
            conn.close()

    def close(self):
        self.sock.close()


def test_worker_hangup_fails_loudly(socket_workers, star6):
    bad = _Hangup()
    try:
        # part 1 goes to the second endpoint
        with pytest.raises(WorkerFailure, match="partition 1") as info:
            master_optimize(star6, 2, "linear", backend="sockets",
                            endpoints=[socket_workers[0], bad.endpoint])
        assert info.value.part_id == 1
    finally:
        bad.close()


def test_killed_worker_process_fails_loudly(star6):
    with local_workers(1) as (endpoints, procs):
        rep = master_optimize(star6, 2, "linear", backend="sockets", endpoints=endpoints)
        assert rep.messages == 4
        procs[0].kill()
        procs[0].wait()
        with pytest.raises(WorkerFailure):
            master_optimize(star6, 2, "linear", backend="sockets", endpoints=endpoints, timeout=10)


class _Impostor(threading.Thread):
    """Answers every task with a valid result that names a different partition."""

    def __init__(self):
        super().__init__(daemon=True)
        self.sock = socket.create_server(("127.0.0.1", 0))
        self.endpoint = f"127.0.0.1:{self.sock.getsockname()[1]}"

    def run(self):
        while True:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                return
            with conn:
                task = PartitionTask.decode(recv_frame(conn))
                other = PartitionTask(task.query, task.part_id ^ 1, task.num_parts, task.space)
                send_frame(conn, handle_request(other.encode()))


def test_mismatched_part_id_is_rejected(star6):
    imp = _Impostor()
    imp.start()
    try:
        with pytest.raises(WorkerFailure, match="names partition"):
            master_optimize(star6, 2, "linear", backend="sockets", endpoints=[imp.endpoint])
    finally:
        imp.sock.close()
