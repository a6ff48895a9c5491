"""Executable checks of the partitioning and optimizer invariants.

Each check returns a :class:`PropertyResult`; the CLI ``verify`` command and
the acceptance tests both run these.
"""
from __future__ import annotations

import contextlib
import os
import subprocess
import sys
from dataclasses import dataclass
from math import factorial

import numpy as np

from .dp import worker_optimize
from .model import LinearConstraint, PlanSpace, full_set, to_prefix
from .orchestrator import master_optimize
from .partitioning import (
    PartitionSpec,
    adm_join_results,
    count_admissible,
    max_constraints,
    part_constraints,
)
from .workload import (
    brute_force_oracle,
    bushy_trees,
    generate_star_query,
    left_deep_orders,
    order_satisfies,
    tree_admissible,
)

REL_TOL = 1e-9


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.name}: {self.detail}"


def _close(a: float, b: float, rel: float = REL_TOL) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b))


def _catalan(k: int) -> int:
    return factorial(2 * k) // (factorial(k + 1) * factorial(k))


# -- partition structure ---------------------------------------------------------


def _violations(masks: np.ndarray, constraints) -> int:
    sizes = np.bitwise_count(masks)
    bad = np.zeros(len(masks), dtype=bool)
    one = np.uint64(1)
    for c in constraints:
        has = lambda t: (masks >> np.uint64(t)) & one  # noqa: E731
        if isinstance(c, LinearConstraint):
            bad |= (has(c.y) == 1) & (has(c.x) == 0) & (sizes >= 2)
        else:
            bad |= (has(c.y) == 1) & (has(c.z) == 1) & (has(c.x) == 0)
    return int(bad.sum())


def check_counts(space: PlanSpace, ns, ls=None) -> PropertyResult:
    """Every partition of every (n, l) materializes exactly the closed-form count."""
    space = PlanSpace.parse(space)
    checked = 0
    seen = set()
    for n in ns:
        bound = max_constraints(n, space)
        for l in (range(bound + 1) if ls is None else [l for l in ls if l <= bound]):
            want = count_admissible(n, l, space)
            for pid in range(1 << l):
                cons = part_constraints(n, PartitionSpec(pid, 1 << l, space))
                adm = adm_join_results(n, cons, space)
                masks = adm.masks
                if len(masks) != want:
                    return PropertyResult(
                        f"counts/{space.value}", False,
                        f"n={n} l={l} part={pid}: {len(masks)} sets, expected {want}")
                if len(masks) > 1 and not np.all(masks[1:] > masks[:-1]):
                    return PropertyResult(f"counts/{space.value}", False,
                                          f"n={n} l={l} part={pid}: duplicate sets")
                if _violations(masks, cons):
                    return PropertyResult(f"counts/{space.value}", False,
                                          f"n={n} l={l} part={pid}: excluded set materialized")
                checked += 1
                seen.add(want)
    sizes = ("sizes " + ", ".join(str(w) for w in sorted(seen)) if len(seen) <= 4
             else f"{len(seen)} distinct sizes")
    return PropertyResult(f"counts/{space.value}", True,
                          f"{checked} partitions match the closed form exactly ({sizes})")


def check_linear_coverage(n: int, m: int) -> PropertyResult:
    """Each permutation satisfies exactly one partition, and its prefixes are admissible there."""
    name = f"coverage/linear n={n} m={m}"
    parts = [part_constraints(n, PartitionSpec(p, m, "linear")) for p in range(m)]
    adm = [adm_join_results(n, c).as_set for c in parts]
    count = 0
    for order in left_deep_orders(n):
        owners = [p for p, c in enumerate(parts) if order_satisfies(order, c)]
        if len(owners) != 1:
            return PropertyResult(name, False, f"order {order} owned by {owners}")
        prefix = 1 << order[0]
        for t in order[1:]:
            prefix |= 1 << t
            if prefix not in adm[owners[0]]:
                return PropertyResult(name, False, f"order {order}: prefix {prefix:#x} inadmissible")
        count += 1
    if count != factorial(n):
        return PropertyResult(name, False, f"enumerated {count} orders")
    return PropertyResult(name, True, f"all {count} permutations owned by exactly one partition")


def check_bushy_coverage(n: int, m: int) -> PropertyResult:
    name = f"coverage/bushy n={n} m={m}"
    parts = [part_constraints(n, PartitionSpec(p, m, "bushy")) for p in range(m)]
    trees = 0
    overlap = 0
    for tree in bushy_trees(full_set(n)):
        owners = sum(tree_admissible(tree, c) for c in parts)
        if owners == 0:
            return PropertyResult(name, False, f"tree {tree} in no partition")
        overlap += owners > 1
        trees += 1
    expected = factorial(n) * _catalan(n - 1)
    if trees != expected:
        return PropertyResult(name, False, f"enumerated {trees} trees, expected {expected}")
    return PropertyResult(name, True, f"{trees} trees covered ({overlap} by several partitions)")


def check_union(space: PlanSpace, n: int, m: int) -> PropertyResult:
    name = f"union/{PlanSpace.parse(space).value} n={n} m={m}"
    seen: set[int] = set()
    for p in range(m):
        seen |= adm_join_results(n, part_constraints(n, PartitionSpec(p, m, space))).as_set
    ok = seen == set(range(1 << n))
    return PropertyResult(name, ok, f"{len(seen)} of {1 << n} subsets reached")


def check_split_ratio() -> PropertyResult:
    """Per-triple operand possibilities from worker instrumentation: 27 free, 21 constrained."""
    q = generate_star_query(3, 0)
    # the DP only splits sets of 2+ tables; the empty set and the 3 singletons add 1 + 2*3
    small = 1 + 2 * 3
    _, free = worker_optimize(q, PartitionSpec(0, 1, "bushy"))
    counts = [free.operand_candidates + small]
    for pid in (0, 1):
        _, st = worker_optimize(q, PartitionSpec(pid, 2, "bushy"))
        counts.append(st.operand_candidates + small)
    ok = counts == [27, 21, 21]
    return PropertyResult("split-ratio/bushy", ok,
                          f"unconstrained {counts[0]}, constrained {counts[1:]}")


def check_memory_scaling(space: PlanSpace, n: int, seed: int = 1) -> PropertyResult:
    space = PlanSpace.parse(space)
    num, den = (3, 4) if space is PlanSpace.LINEAR else (7, 8)
    q = generate_star_query(n, seed)
    peaks = []
    for l in range(min(max_constraints(n, space), 4) + 1):
        rep = master_optimize(q, 1 << l, space)
        peaks.append(max(s.peak_memo_entries for s in rep.per_worker_stats))
    ok = all(b * den == a * num for a, b in zip(peaks, peaks[1:]))
    ok &= peaks[0] == 2**n
    return PropertyResult(f"memory/{space.value} n={n}", ok, f"peak memo entries {peaks}")


# -- optimizer results ------------------------------------------------------------


def check_oracle(space: PlanSpace, ns, ms=(1, 2, 4), queries: int = 50, seed: int = 0,
                 backend: str = "threads") -> PropertyResult:
    space = PlanSpace.parse(space)
    name = f"oracle/{space.value}"
    runs = 0
    for n in ns:
        for i in range(queries):
            q = generate_star_query(n, seed + i)
            want = brute_force_oracle(q, space).cost
            for m in ms:
                if m > 1 << max_constraints(n, space):
                    continue
                got = master_optimize(q, m, space, backend=backend).best_cost[0]
                if not _close(got, want):
                    return PropertyResult(name, False, f"n={n} seed={seed + i} m={m}: {got} vs {want}")
                runs += 1
    return PropertyResult(name, True, f"{runs} runs equal the exhaustive optimum")


def check_alpha_coverage(ns, ms=(1, 4), queries: int = 20, alpha: float = 10.0,
                         seed: int = 0, space: PlanSpace = PlanSpace.LINEAR) -> PropertyResult:
    space = PlanSpace.parse(space)
    name = f"alpha-coverage/{space.value} alpha={alpha:g}"
    checked = 0
    for n in ns:
        for i in range(queries):
            q = generate_star_query(n, seed + i)
            front = brute_force_oracle(q, space, objectives=2).front
            for m in ms:
                if m > 1 << max_constraints(n, space):
                    continue
                plans = master_optimize(q, m, space, objectives=2, alpha=alpha).global_best
                for f in front:
                    if not any(all(c <= alpha * x for c, x in zip(p.cost, f)) for p in plans):
                        return PropertyResult(name, False, f"n={n} seed={seed + i} m={m}: {f} uncovered")
                    checked += 1
    return PropertyResult(name, True, f"{checked} Pareto points covered, 0 violations")


def check_messages(n: int = 16, ms=(1, 2, 4, 8, 16), seed: int = 0,
                   space: PlanSpace = PlanSpace.LINEAR, max_rel: float = 0.05) -> PropertyResult:
    q = generate_star_query(n, seed)
    sizes = []
    for m in ms:
        rep = master_optimize(q, m, space)
        if rep.messages != 2 * m:
            return PropertyResult("messages", False, f"m={m}: {rep.messages} messages")
        sizes.append(rep.total_bytes_sent)
    x = np.asarray(ms, dtype=float)
    y = np.asarray(sizes, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    rel = float(np.max(np.abs(y - (slope * x + intercept)) / y))
    ok = rel < max_rel
    return PropertyResult("messages", ok,
                          f"2m messages each; bytes {sizes}, affine fit max rel residual {rel:.4f}")


@contextlib.contextmanager
def local_workers(count: int):
    """Start ``count`` socket worker processes on ephemeral ports; yields endpoints."""
    procs = []
    try:
        endpoints = []
        for _ in range(count):
            p = subprocess.Popen(
                [sys.executable, "-m", "joinpart.cli", "worker", "--port", "0"],
                stdout=subprocess.PIPE, text=True,
            )
            procs.append(p)
            line = p.stdout.readline().strip()
            if not line.startswith("listening on "):
                raise RuntimeError(f"worker did not start: {line!r}")
            endpoints.append(line.removeprefix("listening on "))
        yield endpoints, procs
    finally:
        for p in procs:
            p.kill()
            p.wait()
            if p.stdout:
                p.stdout.close()


def check_backends(n: int = 12, m: int = 4, queries: int = 20, seed: int = 0,
                   space: PlanSpace = PlanSpace.LINEAR, processes: int = 2) -> PropertyResult:
    with local_workers(processes) as (endpoints, _):
        for i in range(queries):
            q = generate_star_query(n, seed + i)
            a = master_optimize(q, m, space, backend="threads")
            b = master_optimize(q, m, space, backend="sockets", endpoints=endpoints)
            if a.best_cost != b.best_cost or [to_prefix(p) for p in a.global_best] != [
                to_prefix(p) for p in b.global_best
            ]:
                return PropertyResult("backends", False, f"seed={seed + i}: backends disagree")
            if a.messages != b.messages:
                return PropertyResult("backends", False, f"seed={seed + i}: message counts differ")
    return PropertyResult("backends", True,
                          f"{queries} queries identical over threads and {processes} socket workers")


def check_wall_time(n: int = 18, ms=(1, 2, 4, 8), seed: int = 0, min_cores: int = 8) -> PropertyResult:
    cores = os.cpu_count() or 1
    if cores < min_cores:
        return PropertyResult("wall-time", True,
                              f"needs >= {min_cores} cores, found {cores}", skipped=True)
    q = generate_star_query(n, seed)
    times = [master_optimize(q, m, "linear", backend="processes").master_wall_time for m in ms]
    ok = all(b < a for a, b in zip(times, times[1:]))
    return PropertyResult("wall-time", ok, "master seconds " + ", ".join(f"{t:.2f}" for t in times))
