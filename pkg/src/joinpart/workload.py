"""Seeded star-query generation and exhaustive reference optimizers.

Random numbers come from :class:`random.Random` (MT19937) and are drawn in a
fixed order: for each table ``0..n-1`` one ``random()`` for its cardinality,
then for each satellite ``1..n-1`` one ``random()`` for its selectivity.
"""
from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from .costs import DEFAULT_REGISTRY, OperatorRegistry, check_objectives, combine, join_cost, result_cardinality, scan_cost
from .dp import PartitionSpec, dominates, worker_optimize
from .errors import InvalidArguments, TooLarge
from .model import (
    JoinOrderConstraint,
    Plan,
    PlanSpace,
    Query,
    TableSet,
    excludes,
    full_set,
    members,
)

MIN_CARD = 10.0
MAX_CARD = 100_000.0
ORACLE_LIMITS = {PlanSpace.LINEAR: 10, PlanSpace.BUSHY: 8}


def generate_star_query(n: int, seed: int) -> Query:
    """Hub table 0 joined to every satellite; log-uniform cardinalities."""
    if n < 2:
        raise InvalidArguments(f"a star query needs at least 2 tables, got {n}")
    rng = random.Random(seed)
    lo, hi = math.log10(MIN_CARD), math.log10(MAX_CARD)
    cards = [float(round(10 ** (lo + (hi - lo) * rng.random()))) for _ in range(n)]
    edges = []
    for i in range(1, n):
        floor = min(1.0, 10.0 / min(cards[0], cards[i]))
        edges.append((0, i, floor + (1.0 - floor) * rng.random()))
    return Query(n, tuple(cards), tuple(edges))


def dump_query(q: Query) -> str:
    return json.dumps(q.to_dict(), separators=(",", ":"))


def load_query(text: str) -> Query:
    return Query.from_dict(json.loads(text))


def serial_baseline(
    q: Query,
    space: PlanSpace,
    objectives: int = 1,
    registry: OperatorRegistry = DEFAULT_REGISTRY,
    alpha: float = 10.0,
) -> list[Plan]:
    """Unpartitioned optimization in the calling thread, no transport."""
    plans, _ = worker_optimize(q, PartitionSpec(0, 1, space), objectives, registry, alpha)
    return plans


# -- exhaustive enumeration ----------------------------------------------------


def left_deep_orders(n: int) -> Iterator[tuple[int, ...]]:
    return itertools.permutations(range(n))


def bushy_trees(s: TableSet):
    """Every binary tree over the tables of ``s``; children are ordered (outer, inner).

    Leaves are table indices, inner nodes are ``(left, right)`` pairs.
    """
    if s & (s - 1) == 0:
        yield s.bit_length() - 1
        return
    left = (s - 1) & s
    while left:
        for lt in bushy_trees(left):
            for rt in bushy_trees(s ^ left):
                yield (lt, rt)
        left = (left - 1) & s


def order_to_tree(order: Sequence[int]):
    tree = order[0]
    for t in order[1:]:
        tree = (tree, t)
    return tree


def tree_results(tree) -> list[TableSet]:
    """Result sets of all inner nodes of an index tree."""
    out: list[TableSet] = []

    def walk(node) -> TableSet:
        if isinstance(node, int):
            return 1 << node
        s = walk(node[0]) | walk(node[1])
        out.append(s)
        return s

    walk(tree)
    return out


def order_satisfies(order: Sequence[int], constraints: Sequence[JoinOrderConstraint]) -> bool:
    pos = {t: i for i, t in enumerate(order)}
    return all(pos[c.x] < pos[c.y] for c in constraints)


def tree_admissible(tree, constraints: Sequence[JoinOrderConstraint]) -> bool:
    return all(not excludes(c, s) for s in tree_results(tree) for c in constraints)


def _tree_costs(q, tree, objectives, registry):
    """All (cost, card) pairs for one tree across every operator assignment."""
    if isinstance(tree, int):
        card = q.cardinalities[tree]
        return [(scan_cost(card, objectives), card)] * len(registry.scan_ops)
    left = _tree_costs(q, tree[0], objectives, registry)
    right = _tree_costs(q, tree[1], objectives, registry)
    out_card = result_cardinality(q, tree_results(tree)[-1])
    res = []
    for lc, lcard in left:
        for rc, rcard in right:
            for op in range(len(registry.join_ops)):
                node = join_cost(op, lcard, rcard, out_card, objectives, registry)
                res.append((combine(lc, rc, node), out_card))
    return res


def enumerate_plan_costs(
    q: Query,
    space: PlanSpace,
    objectives: int = 1,
    constraints: Sequence[JoinOrderConstraint] = (),
    registry: OperatorRegistry = DEFAULT_REGISTRY,
) -> list[tuple[float, ...]]:
    """Cost vector of every plan (tree x operator assignment) in the space, literally.

    Factorial growth; intended for cross-checking :func:`brute_force_oracle`
    on small queries.
    """
    space = PlanSpace.parse(space)
    check_objectives(objectives)
    if space is PlanSpace.LINEAR:
        trees = (order_to_tree(o) for o in left_deep_orders(q.n) if order_satisfies(o, constraints))
    else:
        trees = (t for t in bushy_trees(full_set(q.n)) if tree_admissible(t, constraints))
    out = []
    for tree in trees:
        out.extend(c for c, _ in _tree_costs(q, tree, objectives, registry))
    return out


def pareto_front(costs) -> list[tuple[float, ...]]:
    """Exact Pareto-optimal cost vectors, duplicates collapsed."""
    front: list[tuple[float, ...]] = []
    for c in sorted(set(costs)):
        if not any(dominates(f, c) for f in front):
            front.append(c)
    return front


@dataclass(frozen=True)
class OracleResult:
    """Exact optimum: ``cost`` for one metric, ``front`` (sorted Pareto set) for two."""

    cost: float | None
    front: tuple[tuple[float, ...], ...]


def brute_force_oracle(
    q: Query,
    space: PlanSpace,
    objectives: int = 1,
    constraints: Sequence[JoinOrderConstraint] = (),
    registry: OperatorRegistry = DEFAULT_REGISTRY,
) -> OracleResult:
    """Exact optimum over every plan in the (optionally constrained) space.

    Enumerates every split of every table set top-down, keeping for each set
    the exact Pareto front of all plans producing it.  Both metrics are
    monotone in the operands' costs, so the fronts of the operand sets
    contain everything needed and the result equals literal enumeration
    (cross-checked against :func:`enumerate_plan_costs` in the tests).
    Admissibility is tested by filtering against the constraints, not by
    the constructive enumeration the workers use.
    """
    space = PlanSpace.parse(space)
    check_objectives(objectives)
    if q.n > ORACLE_LIMITS[space]:
        raise TooLarge(f"exhaustive {space.value} search limited to {ORACLE_LIMITS[space]} tables")
    constraints = tuple(constraints)
    linear = space is PlanSpace.LINEAR

    def allowed(s: TableSet) -> bool:
        if linear:
            # every prefix of the join order, including the first table alone
            return not any(s >> c.y & 1 and not s >> c.x & 1 for c in constraints)
        return not any(excludes(c, s) for c in constraints)

    @lru_cache(maxsize=None)
    def card(s):
        return result_cardinality(q, s)

    @lru_cache(maxsize=None)
    def front(s: TableSet) -> tuple:
        if s & (s - 1) == 0:
            return (scan_cost(q.cardinalities[s.bit_length() - 1], objectives),)
        found = []
        out = card(s)
        if linear:
            splits = [(s ^ (1 << t), 1 << t) for t in members(s)]
        else:
            splits = []
            left = (s - 1) & s
            while left:
                splits.append((left, s ^ left))
                left = (left - 1) & s
        for left, right in splits:
            # a linear inner operand is a scan, not a prefix of the join order
            if not allowed(left) or not (linear or allowed(right)):
                continue
            lcard, rcard = card(left), card(right)
            for lc in front(left):
                for rc in front(right):
                    for op in range(len(registry.join_ops)):
                        node = join_cost(op, lcard, rcard, out, objectives, registry)
                        found.append(combine(lc, rc, node))
        if objectives == 1:
            return (min(found),) if found else ()
        return tuple(pareto_front(found))

    full = full_set(q.n)
    result = front(full) if allowed(full) else ()
    if not result:
        raise InvalidArguments("constraints leave no plan in the space")
    if objectives == 1:
        return OracleResult(result[0][0], result)
    return OracleResult(None, result)

