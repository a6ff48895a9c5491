"""Cardinality estimation and per-operator cost formulas.

Costs are tuples with one entry per active metric: ``(time,)`` or
``(time, buffer)``.  Plan time sums node times (a scan costs its table's row
count); plan buffer is the maximum node buffer over the join nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import InvalidArguments
from .model import Join, Plan, Query, Scan, TableSet

BLOCK_SIZE = 100


@dataclass(frozen=True)
class ScanOperator:
    name: str


@dataclass(frozen=True)
class JoinOperator:
    name: str
    time: Callable[[float, float, float], float]
    buffer: Callable[[float, float, float], float]


def _hash_time(l, r, out):
    return l + r + out


def _hash_buffer(l, r, out):
    return l


def _sort_merge_time(l, r, out):
    return l * math.log2(l + 2) + r * math.log2(r + 2) + out


def _sort_merge_buffer(l, r, out):
    return l + r


def _bnl_time(l, r, out):
    return l + math.ceil(l / BLOCK_SIZE) * r + out


def _bnl_buffer(l, r, out):
    return float(BLOCK_SIZE)


HASH_JOIN = JoinOperator("hash", _hash_time, _hash_buffer)
SORT_MERGE_JOIN = JoinOperator("sort-merge", _sort_merge_time, _sort_merge_buffer)
BLOCK_NESTED_LOOP_JOIN = JoinOperator("block-nested-loop", _bnl_time, _bnl_buffer)


@dataclass(frozen=True)
class OperatorRegistry:
    """Scan and join operators; an operator's id is its position in the tuple."""

    name: str
    scan_ops: tuple[ScanOperator, ...]
    join_ops: tuple[JoinOperator, ...]

    def __post_init__(self):
        if not self.scan_ops or not self.join_ops:
            raise InvalidArguments("registry needs at least one scan and one join operator")

    def join_op(self, op_id: int) -> JoinOperator:
        if not 0 <= op_id < len(self.join_ops):
            raise InvalidArguments(f"unknown join operator id {op_id}")
        return self.join_ops[op_id]


DEFAULT_REGISTRY = OperatorRegistry(
    "default",
    (ScanOperator("full-scan"),),
    (HASH_JOIN, SORT_MERGE_JOIN, BLOCK_NESTED_LOOP_JOIN),
)
HASH_ONLY_REGISTRY = OperatorRegistry("hash", (ScanOperator("full-scan"),), (HASH_JOIN,))

REGISTRIES = {r.name: r for r in (DEFAULT_REGISTRY, HASH_ONLY_REGISTRY)}


def get_registry(name: str) -> OperatorRegistry:
    try:
        return REGISTRIES[name]
    except KeyError:
        raise InvalidArguments(
            f"unknown cost model {name!r}; choose from {sorted(REGISTRIES)}"
        ) from None


def check_objectives(objectives: int) -> None:
    if objectives not in (1, 2):
        raise InvalidArguments(f"objectives must be 1 or 2, got {objectives}")


def result_cardinality(q: Query, s: TableSet) -> float:
    """Product of member cardinalities times the selectivity of every inner edge.

    Multiplication order is canonical (ascending table index, then sorted
    edges) so every caller gets bit-identical values for the same set.
    """
    if s <= 0:
        raise InvalidArguments("cardinality of an empty table set is undefined")
    if s >> q.n:
        raise InvalidArguments("table set refers to tables outside the query")
    card = 1.0
    rest = s
    while rest:
        low = rest & -rest
        card *= q.cardinalities[low.bit_length() - 1]
        rest ^= low
    for a, b, sel in q.edges:
        if s >> a & 1 and s >> b & 1:
            card *= sel
    return card


def scan_cost(card: float, objectives: int) -> tuple[float, ...]:
    return (card,) if objectives == 1 else (card, 0.0)


def join_cost(
    op_id: int,
    left_card: float,
    right_card: float,
    out_card: float,
    objectives: int,
    registry: OperatorRegistry = DEFAULT_REGISTRY,
) -> tuple[float, ...]:
    """Cost of a single join node, not including its inputs."""
    if min(left_card, right_card, out_card) < 0:
        raise InvalidArguments("cardinalities must be non-negative")
    op = registry.join_op(op_id)
    t = op.time(left_card, right_card, out_card)
    if objectives == 1:
        return (t,)
    return (t, op.buffer(left_card, right_card, out_card))


def combine(left: tuple, right: tuple, node: tuple) -> tuple[float, ...]:
    """Accumulate a join's cost from its operands' plan costs and its own node cost."""
    if len(node) == 1:
        return (left[0] + right[0] + node[0],)
    return (left[0] + right[0] + node[0], max(left[1], right[1], node[1]))


def build_scan(q: Query, table: int, objectives: int, op: int = 0) -> Scan:
    card = q.cardinalities[table]
    return Scan(table, op, card, scan_cost(card, objectives))


def build_join(
    q: Query,
    left: Plan,
    right: Plan,
    op: int,
    objectives: int,
    registry: OperatorRegistry = DEFAULT_REGISTRY,
) -> Join:
    out = result_cardinality(q, left.result_set | right.result_set)
    node = join_cost(op, left.card, right.card, out, objectives, registry)
    return Join(left, right, op, out, combine(left.cost, right.cost, node))


def build_plan(
    q: Query, tree, objectives: int, registry: OperatorRegistry = DEFAULT_REGISTRY
) -> Plan:
    """Rebuild a costed plan from the nested tuples of :func:`model.parse_prefix`."""
    if tree[0] == "S":
        _, t, op = tree
        if not 0 <= t < q.n or not 0 <= op < len(registry.scan_ops):
            raise InvalidArguments(f"bad scan node {tree}")
        return build_scan(q, t, objectives, op)
    _, op, l, r = tree
    return build_join(
        q,
        build_plan(q, l, objectives, registry),
        build_plan(q, r, objectives, registry),
        op,
        objectives,
        registry,
    )
