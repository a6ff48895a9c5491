"""Constrained dynamic programming run by one worker over its plan space partition."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Sequence

from .costs import DEFAULT_REGISTRY, OperatorRegistry, check_objectives, result_cardinality, scan_cost
from .errors import InternalConsistencyError, InvalidArguments
from .model import (
    BushyConstraint,
    Join,
    JoinOrderConstraint,
    LinearConstraint,
    Plan,
    PlanSpace,
    Query,
    Scan,
    TableSet,
    members,
)
from .partitioning import Group, PartitionSpec, adm_join_results, groups, part_constraints


class Entry:
    """A memoized plan: cost plus pointers to the operand entries."""

    __slots__ = ("cost", "op", "left", "right", "mask")

    def __init__(self, cost, op, left, right, mask):
        self.cost = cost
        self.op = op
        self.left = left
        self.right = right
        self.mask = mask

    def __repr__(self):
        return f"Entry(mask={self.mask:#x}, cost={self.cost})"


@dataclass
class WorkerStats:
    plans_generated: int = 0
    split_pairs: int = 0
    # bushy only: left-operand candidates before dropping the empty set and the full set
    operand_candidates: int = 0
    admissible_results: int = 0
    peak_memo_entries: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WorkerStats":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__})


def dominates(a: Sequence[float], b: Sequence[float], alpha: float = 1.0) -> bool:
    """``a`` is within factor ``alpha`` of ``b`` in every metric."""
    return all(x <= alpha * y for x, y in zip(a, b))


def prune(bucket: list, candidate, objectives: int, alpha: float = 1.0) -> bool:
    """Insert ``candidate`` into ``bucket`` unless a stored plan makes it redundant.

    Works on anything with a ``cost`` tuple.  Returns whether it was kept.
    """
    if objectives == 1:
        if not bucket:
            bucket.append(candidate)
            return True
        if candidate.cost[0] < bucket[0].cost[0]:
            bucket[0] = candidate
            return True
        return False
    c = candidate.cost
    for stored in bucket:
        if dominates(stored.cost, c, alpha):
            return False
    bucket[:] = [s for s in bucket if not dominates(c, s.cost)]
    bucket.append(candidate)
    return True


def level_alpha(alpha: float, n: int) -> float:
    """Per-join pruning factor so approximation errors compound to at most ``alpha``."""
    if alpha < 1:
        raise InvalidArguments(f"approximation factor must be >= 1, got {alpha}")
    return alpha ** (1.0 / max(n - 1, 1))


class Memo:
    """Plan buckets keyed by the partition's admissible table sets.

    Slots are allocated for every admissible set up front; scans live in a
    separate per-table array because not every singleton is admissible.
    """

    def __init__(self, keys, scans: list[list[Entry]]):
        self.slots: dict[TableSet, list[Entry]] = {k: [] for k in keys}
        self.scans = scans

    @property
    def peak_entries(self) -> int:
        return len(self.slots)

    def bucket(self, s: TableSet) -> list[Entry]:
        if s & (s - 1) == 0:
            return self.scans[s.bit_length() - 1]
        b = self.slots.get(s)
        if not b:
            raise InternalConsistencyError(f"no plan stored for operand {s:#x}")
        return b


def linear_inner_candidates(u: TableSet, constraints: Sequence[JoinOrderConstraint]) -> list[int]:
    """Tables of ``u`` that may be joined last (as the inner scan)."""
    blocked = 0
    for c in constraints:
        if isinstance(c, LinearConstraint) and u >> c.y & 1:
            blocked |= 1 << c.x
    return [t for t in members(u) if not blocked >> t & 1]


def group_operand_options(g: Group, part: TableSet, u: TableSet) -> list[TableSet]:
    """Admissible left-operand pieces of ``part`` (the block's share of ``u``)."""
    opts = []
    s = part
    while True:
        opts.append(s)
        if s == 0:
            break
        s = (s - 1) & part
    c = g.constraint
    if isinstance(c, BushyConstraint):
        yz = 1 << c.y | 1 << c.z
        drop = {yz}
        if u & yz == yz:
            # its complement inside the block would be {y, z}
            drop.add(1 << c.x)
        opts = [o for o in opts if o not in drop]
    return opts[::-1]


def bushy_left_operands(u: TableSet, blocks: Sequence[Group], cache: dict | None = None):
    """Left operands of all admissible splits of ``u``.

    Returns ``(candidates, operands)``: the size of the per-block Cartesian
    product before the empty and full sets are dropped, and the surviving
    operands in ascending order.
    """
    acc = [0]
    for g in blocks:
        part = g.mask & u
        if not part:
            continue
        if cache is not None:
            key = (g.mask, part, u & g.mask == g.mask)
            opts = cache.get(key)
            if opts is None:
                opts = cache[key] = group_operand_options(g, part, u)
        else:
            opts = group_operand_options(g, part, u)
        acc = [a | o for a in acc for o in opts]
    candidates = len(acc)
    acc = [a for a in acc if a and a != u]
    acc.sort()
    return candidates, acc


class _Worker:
    def __init__(self, q, constraints, space, objectives, registry, alpha):
        self.q = q
        self.constraints = constraints
        self.space = space
        self.objectives = objectives
        self.registry = registry
        self.alpha = level_alpha(alpha, q.n) if objectives > 1 else 1.0
        self.stats = WorkerStats()
        self.cards: dict[TableSet, float] = {}
        self.blocks = groups(q.n, constraints)
        self.adm = adm_join_results(q.n, constraints)
        scans = []
        for t in range(q.n):
            card = q.cardinalities[t]
            scans.append(
                [Entry(scan_cost(card, objectives), op, None, None, 1 << t)
                 for op in range(len(registry.scan_ops))]
            )
            self.cards[1 << t] = card
        self.memo = Memo(self.adm, scans)
        self.stats.admissible_results = len(self.adm)
        self.stats.peak_memo_entries = self.memo.peak_entries
        # blocked_by[t]: tables v with t<v; t can't be the inner operand while v is present
        self.blocked_by = [0] * q.n
        for c in constraints:
            if isinstance(c, LinearConstraint):
                self.blocked_by[c.x] |= 1 << c.y
        self.split_cache: dict = {}

    def card(self, s: TableSet) -> float:
        c = self.cards.get(s)
        if c is None:
            c = self.cards[s] = result_cardinality(self.q, s)
        return c

    def join_into(self, target, left_bucket, right_bucket, lcard, rcard, out):
        ops = self.registry.join_ops
        stats = self.stats
        if self.objectives == 1:
            for lp in left_bucket:
                lt = lp.cost[0]
                for rp in right_bucket:
                    base = lt + rp.cost[0]
                    for op_id, op in enumerate(ops):
                        stats.plans_generated += 1
                        cost = base + op.time(lcard, rcard, out)
                        if not target or cost < target[0].cost[0]:
                            e = Entry((cost,), op_id, lp, rp, lp.mask | rp.mask)
                            if target:
                                target[0] = e
                            else:
                                target.append(e)
            return
        alpha = self.alpha
        for lp in left_bucket:
            lc = lp.cost
            for rp in right_bucket:
                rc = rp.cost
                for op_id, op in enumerate(ops):
                    stats.plans_generated += 1
                    cost = (
                        lc[0] + rc[0] + op.time(lcard, rcard, out),
                        max(lc[1], rc[1], op.buffer(lcard, rcard, out)),
                    )
                    prune(target, Entry(cost, op_id, lp, rp, lp.mask | rp.mask), 2, alpha)

    def try_splits_linear(self, u: TableSet) -> None:
        target = self.memo.slots[u]
        out = self.card(u)
        rest = u
        while rest:
            low = rest & -rest
            rest ^= low
            t = low.bit_length() - 1
            if self.blocked_by[t] & u:
                continue
            outer = u ^ low
            self.stats.split_pairs += 1
            self.join_into(target, self.memo.bucket(outer), self.memo.scans[t],
                           self.card(outer), self.cards[low], out)

    def try_splits_bushy(self, u: TableSet) -> None:
        target = self.memo.slots[u]
        out = self.card(u)
        candidates, operands = bushy_left_operands(u, self.blocks, self.split_cache)
        self.stats.operand_candidates += candidates
        for left in operands:
            right = u ^ left
            self.stats.split_pairs += 1
            self.join_into(target, self.memo.bucket(left), self.memo.bucket(right),
                           self.card(left), self.card(right), out)

    def run(self) -> list[Entry]:
        start = time.perf_counter()
        try_splits = (self.try_splits_linear if self.space is PlanSpace.LINEAR
                      else self.try_splits_bushy)
        for k in range(2, self.q.n + 1):
            for u in self.adm.of_size(k):
                try_splits(u)
                if not self.memo.slots[u]:
                    raise InternalConsistencyError(f"admissible set {u:#x} has no admissible split")
        self.stats.wall_time = time.perf_counter() - start
        return self.memo.slots[self.q.all_tables]


def to_plan(q: Query, e: Entry, cards: dict | None = None) -> Plan:
    if e.left is None:
        t = e.mask.bit_length() - 1
        return Scan(t, e.op, q.cardinalities[t], e.cost)
    card = cards[e.mask] if cards and e.mask in cards else result_cardinality(q, e.mask)
    return Join(to_plan(q, e.left, cards), to_plan(q, e.right, cards), e.op, card, e.cost)


def worker_optimize(
    q: Query,
    spec: PartitionSpec,
    objectives: int = 1,
    registry: OperatorRegistry = DEFAULT_REGISTRY,
    alpha: float = 10.0,
) -> tuple[list[Plan], WorkerStats]:
    """Best plan(s) for the whole query within one partition, plus work counters.

    Single-objective runs return one plan; two-objective runs return an
    approximate Pareto set whose members jointly cover every plan of the
    partition within ``alpha`` in each metric.
    """
    check_objectives(objectives)
    constraints = part_constraints(q, spec)
    w = _Worker(q, constraints, spec.space, objectives, registry, alpha)
    entries = w.run()
    return [to_plan(q, e, w.cards) for e in entries], w.stats


def optimize_constrained(
    q: Query,
    constraints: list[JoinOrderConstraint],
    space: PlanSpace,
    objectives: int = 1,
    registry: OperatorRegistry = DEFAULT_REGISTRY,
    alpha: float = 10.0,
) -> tuple[list[Plan], WorkerStats]:
    """Same as :func:`worker_optimize` for an explicit constraint list."""
    check_objectives(objectives)
    space = PlanSpace.parse(space)
    want = LinearConstraint if space is PlanSpace.LINEAR else BushyConstraint
    if not all(isinstance(c, want) for c in constraints):
        raise InvalidArguments("constraints do not match plan space")
    w = _Worker(q, list(constraints), space, objectives, registry, alpha)
    entries = w.run()
    return [to_plan(q, e, w.cards) for e in entries], w.stats
