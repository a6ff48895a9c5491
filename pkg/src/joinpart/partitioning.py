"""Partition IDs, the join-order constraints they encode, and admissible join results."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArguments
from .model import (
    BushyConstraint,
    JoinOrderConstraint,
    LinearConstraint,
    PlanSpace,
    Query,
    TableSet,
    check_constraints,
)


def max_constraints(n: int, space: PlanSpace) -> int:
    return n // 2 if PlanSpace.parse(space) is PlanSpace.LINEAR else n // 3


def max_workers(n: int, space: PlanSpace) -> int:
    return 1 << max_constraints(n, space)


def round_workers(requested: int) -> int:
    """Largest power of two not above ``requested``."""
    if requested < 1:
        raise InvalidArguments(f"worker count must be positive, got {requested}")
    return 1 << (requested.bit_length() - 1)


@dataclass(frozen=True)
class PartitionSpec:
    part_id: int
    m: int
    space: PlanSpace

    def __post_init__(self):
        object.__setattr__(self, "space", PlanSpace.parse(self.space))
        if self.m < 1 or self.m & (self.m - 1):
            raise InvalidArguments(f"partition count must be a power of two, got {self.m}")
        if not 0 <= self.part_id < self.m:
            raise InvalidArguments(f"partition id {self.part_id} outside [0, {self.m})")

    @property
    def l(self) -> int:
        return self.m.bit_length() - 1

    def check(self, n: int) -> None:
        bound = max_constraints(n, self.space)
        if self.l > bound:
            raise InvalidArguments(
                f"{self.m} partitions need {self.l} constraints but a {self.space.value} "
                f"space over {n} tables allows at most {bound}"
            )


def constraint_for(space: PlanSpace, i: int, prec_ord: int, n: int) -> JoinOrderConstraint:
    space = PlanSpace.parse(space)
    if prec_ord not in (0, 1):
        raise InvalidArguments(f"precedence bit must be 0 or 1, got {prec_ord}")
    if space is PlanSpace.LINEAR:
        if i < 0 or 2 * i + 1 >= n:
            raise InvalidArguments(f"no table pair {i} among {n} tables")
        a, b = 2 * i, 2 * i + 1
        return LinearConstraint(a, b) if prec_ord == 0 else LinearConstraint(b, a)
    if i < 0 or 3 * i + 2 >= n:
        raise InvalidArguments(f"no table triple {i} among {n} tables")
    a, b, c = 3 * i, 3 * i + 1, 3 * i + 2
    return BushyConstraint(a, b, c) if prec_ord == 0 else BushyConstraint(b, a, c)


def part_constraints(q: Query | int, spec: PartitionSpec) -> list[JoinOrderConstraint]:
    """Constraint ``i`` takes its direction from bit ``i`` of the partition id (LSB first)."""
    n = q if isinstance(q, int) else q.n
    spec.check(n)
    return [constraint_for(spec.space, i, spec.part_id >> i & 1, n) for i in range(spec.l)]


def count_admissible(n: int, l: int, space: PlanSpace) -> int:
    if PlanSpace.parse(space) is PlanSpace.LINEAR:
        return 3**l * 2 ** (n - 2 * l)
    return 7**l * 2 ** (n - 3 * l)


@dataclass(frozen=True)
class Group:
    """A block of tables whose subsets combine independently with the other blocks."""

    mask: TableSet
    constraint: JoinOrderConstraint | None

    def options(self) -> list[TableSet]:
        """Admissible sub-blocks, ascending."""
        subs = _submasks(self.mask)
        c = self.constraint
        if isinstance(c, LinearConstraint):
            bad = 1 << c.y
        elif isinstance(c, BushyConstraint):
            bad = 1 << c.y | 1 << c.z
        else:
            return subs
        return [s for s in subs if s != bad]


def _submasks(mask: TableSet) -> list[TableSet]:
    out = []
    s = mask
    while True:
        out.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    return out[::-1]


def groups(n: int, constraints: list[JoinOrderConstraint]) -> list[Group]:
    """Constraint scopes plus one singleton block per unconstrained table, high bits first."""
    check_constraints(constraints, n)
    covered = 0
    out = []
    for c in constraints:
        mask = 0
        for t in c.tables:
            mask |= 1 << t
        covered |= mask
        out.append(Group(mask, c))
    for t in range(n):
        if not covered >> t & 1:
            out.append(Group(1 << t, None))
    out.sort(key=lambda g: g.mask, reverse=True)
    return out


class AdmissibleSets:
    """Admissible join results of one partition, ascending, indexed by cardinality."""

    def __init__(self, n: int, masks: np.ndarray):
        self.n = n
        self.masks = masks

    def __len__(self):
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks.tolist())

    def __contains__(self, s: TableSet) -> bool:
        return s in self.as_set

    @cached_property
    def as_set(self) -> set[TableSet]:
        return set(self.masks.tolist())

    @cached_property
    def by_size(self) -> dict[int, list[TableSet]]:
        counts = np.bitwise_count(self.masks)
        order = np.argsort(counts, kind="stable")
        sorted_counts = counts[order]
        sorted_masks = self.masks[order]
        out = {k: [] for k in range(self.n + 1)}
        bounds = np.searchsorted(sorted_counts, np.arange(self.n + 2))
        for k in range(self.n + 1):
            out[k] = sorted_masks[bounds[k]:bounds[k + 1]].tolist()
        return out

    def of_size(self, k: int) -> list[TableSet]:
        return self.by_size.get(k, [])


def adm_join_results(
    q: Query | int, constraints: list[JoinOrderConstraint], space: PlanSpace | None = None
) -> AdmissibleSets:
    """Cartesian product of each block's admissible sub-blocks.

    ``space`` is implied by the constraint type; it is accepted for symmetry
    with the other partitioning calls and checked when given.
    """
    n = q if isinstance(q, int) else q.n
    if space is not None and constraints:
        want = LinearConstraint if PlanSpace.parse(space) is PlanSpace.LINEAR else BushyConstraint
        if not all(isinstance(c, want) for c in constraints):
            raise InvalidArguments(f"constraints do not match plan space {space}")
    result = np.zeros(1, dtype=np.uint64)
    # Blocks are visited from the highest bits down, so row-major products stay sorted.
    for g in groups(n, constraints):
        opts = np.asarray(g.options(), dtype=np.uint64)
        result = (result[:, None] | opts[None, :]).ravel()
    return AdmissibleSets(n, result)
