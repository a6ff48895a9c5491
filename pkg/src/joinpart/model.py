"""Queries, table sets, plans and join-order constraints.

Table sets are plain ``int`` bit masks: bit ``i`` set means table ``i`` is a
member.  Python ints hash and compare canonically, so two sets with the same
members are the same key in every dict the optimizer keeps.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Union

from .errors import InvalidArguments

MAX_TABLES = 64

TableSet = int


def table_set(tables: Iterable[int]) -> TableSet:
    mask = 0
    for t in tables:
        mask |= 1 << t
    return mask


def members(mask: TableSet) -> list[int]:
    """Member indices in ascending order."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def size(mask: TableSet) -> int:
    return mask.bit_count()


def full_set(n: int) -> TableSet:
    return (1 << n) - 1


class PlanSpace(str, enum.Enum):
    LINEAR = "linear"
    BUSHY = "bushy"

    @classmethod
    def parse(cls, value: "PlanSpace | str") -> "PlanSpace":
        if isinstance(value, PlanSpace):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArguments(f"unknown plan space {value!r}") from None


@dataclass(frozen=True)
class Query:
    """Tables ``0..n-1`` with row counts and a selectivity per join predicate."""

    n: int
    cardinalities: tuple[float, ...]
    edges: tuple[tuple[int, int, float], ...] = ()
    _selectivity: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "cardinalities", tuple(float(c) for c in self.cardinalities))
        edges = tuple(sorted((int(a), int(b), float(s)) for a, b, s in self.edges))
        object.__setattr__(self, "edges", edges)
        if not 2 <= self.n <= MAX_TABLES:
            raise InvalidArguments(f"table count must be in [2, {MAX_TABLES}], got {self.n}")
        if len(self.cardinalities) != self.n:
            raise InvalidArguments("one cardinality per table required")
        if any(not c > 0 or c == float("inf") for c in self.cardinalities):
            raise InvalidArguments("cardinalities must be positive and finite")
        sel = {}
        for a, b, s in edges:
            if not 0 <= a < b < self.n:
                raise InvalidArguments(f"bad edge endpoints ({a}, {b})")
            if not 0 < s <= 1:
                raise InvalidArguments(f"selectivity {s} outside (0, 1]")
            if (a, b) in sel:
                raise InvalidArguments(f"duplicate edge ({a}, {b})")
            sel[(a, b)] = s
        object.__setattr__(self, "_selectivity", sel)

    def selectivity(self, a: int, b: int) -> float:
        if a > b:
            a, b = b, a
        return self._selectivity.get((a, b), 1.0)

    @property
    def all_tables(self) -> TableSet:
        return full_set(self.n)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cards": list(self.cardinalities),
            "edges": [[a, b, s] for a, b, s in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Query":
        try:
            return cls(
                n=int(data["n"]),
                cardinalities=tuple(data["cards"]),
                edges=tuple((e[0], e[1], e[2]) for e in data["edges"]),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise InvalidArguments(f"malformed query: {exc}") from None


# -- constraints -------------------------------------------------------------


@dataclass(frozen=True)
class LinearConstraint:
    """``x`` must precede ``y`` in the join order."""

    x: int
    y: int

    @property
    def tables(self) -> tuple[int, ...]:
        return (self.x, self.y)

    def __str__(self):
        return f"{self.x}<{self.y}"


@dataclass(frozen=True)
class BushyConstraint:
    """Walking up from leaf ``z``, ``y`` must not show up before ``x``."""

    x: int
    y: int
    z: int

    @property
    def tables(self) -> tuple[int, ...]:
        return (self.x, self.y, self.z)

    def __str__(self):
        return f"{self.x}<={self.y}|{self.z}"


JoinOrderConstraint = Union[LinearConstraint, BushyConstraint]


def excludes(c: JoinOrderConstraint, s: TableSet) -> bool:
    """True if no plan respecting ``c`` can produce intermediate result ``s``.

    Linear constraints never exclude singletons; scans are seeded regardless.
    """
    if isinstance(c, LinearConstraint):
        return bool(s >> c.y & 1) and not s >> c.x & 1 and s.bit_count() >= 2
    return bool(s >> c.y & 1) and bool(s >> c.z & 1) and not s >> c.x & 1


def admissible(constraints: Iterable[JoinOrderConstraint], s: TableSet) -> bool:
    return not any(excludes(c, s) for c in constraints)


def check_constraints(constraints: Iterable[JoinOrderConstraint], n: int) -> None:
    seen: set[int] = set()
    for c in constraints:
        ts = c.tables
        if len(set(ts)) != len(ts) or any(not 0 <= t < n for t in ts):
            raise InvalidArguments(f"constraint {c} invalid for {n} tables")
        if seen & set(ts):
            raise InvalidArguments("constraint scopes overlap")
        seen.update(ts)


# -- plans -------------------------------------------------------------------


@dataclass(frozen=True)
class Scan:
    table: int
    op: int
    card: float
    cost: tuple[float, ...]

    @property
    def result_set(self) -> TableSet:
        return 1 << self.table


@dataclass(frozen=True)
class Join:
    left: "Plan"
    right: "Plan"
    op: int
    card: float
    cost: tuple[float, ...]
    result_set: TableSet = field(init=False)

    def __post_init__(self):
        if self.left.result_set & self.right.result_set:
            raise InvalidArguments("join operands overlap")
        object.__setattr__(self, "result_set", self.left.result_set | self.right.result_set)


Plan = Union[Scan, Join]


def is_left_deep(plan: Plan) -> bool:
    while isinstance(plan, Join):
        if not isinstance(plan.right, Scan):
            return False
        plan = plan.left
    return True


def intermediate_results(plan: Plan) -> list[TableSet]:
    """Result sets of every join node, children before parents."""
    if isinstance(plan, Scan):
        return []
    return intermediate_results(plan.left) + intermediate_results(plan.right) + [plan.result_set]


def join_order(plan: Plan) -> list[int]:
    """Table sequence of a left-deep plan."""
    if not is_left_deep(plan):
        raise InvalidArguments("join order is only defined for left-deep plans")
    order = []
    while isinstance(plan, Join):
        order.append(plan.right.table)
        plan = plan.left
    order.append(plan.table)
    return order[::-1]


def to_prefix(plan: Plan) -> str:
    """Nested prefix form ``S(table,op)`` / ``J(op,left,right)``."""
    if isinstance(plan, Scan):
        return f"S({plan.table},{plan.op})"
    return f"J({plan.op},{to_prefix(plan.left)},{to_prefix(plan.right)})"


def parse_prefix(text: str):
    """Parse a prefix string into nested tuples ``('S', t, op)`` / ``('J', op, l, r)``."""
    pos = 0

    def number():
        nonlocal pos
        start = pos
        while pos < len(text) and text[pos].isdigit():
            pos += 1
        if start == pos:
            raise InvalidArguments(f"expected integer at {start} in {text!r}")
        return int(text[start:pos])

    def expect(ch):
        nonlocal pos
        if pos >= len(text) or text[pos] != ch:
            raise InvalidArguments(f"expected {ch!r} at {pos} in {text!r}")
        pos += 1

    def node():
        nonlocal pos
        if pos >= len(text):
            raise InvalidArguments("truncated plan")
        kind = text[pos]
        pos += 1
        expect("(")
        if kind == "S":
            t = number()
            expect(",")
            op = number()
            expect(")")
            return ("S", t, op)
        if kind == "J":
            op = number()
            expect(",")
            left = node()
            expect(",")
            right = node()
            expect(")")
            return ("J", op, left, right)
        raise InvalidArguments(f"unknown plan node {kind!r}")

    tree = node()
    if pos != len(text):
        raise InvalidArguments(f"trailing characters in plan {text!r}")
    return tree
