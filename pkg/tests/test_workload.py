import math
import time

import pytest

from joinpart.errors import InvalidArguments, TooLarge
from joinpart.model import PlanSpace, full_set, is_left_deep
from joinpart.costs import build_plan
from joinpart.workload import (
    brute_force_oracle,
    bushy_trees,
    dump_query,
    enumerate_plan_costs,
    generate_star_query,
    load_query,
    order_to_tree,
    pareto_front,
    serial_baseline,
)
from joinpart.orchestrator import master_optimize


def test_star_shape():
    q = generate_star_query(2, 5)
    assert [(a, b) for a, b, _ in q.edges] == [(0, 1)]
    q = generate_star_query(5, 5)
    degree = [0] * 5
    for a, b, _ in q.edges:
        degree[a] += 1
        degree[b] += 1
    assert degree == [4, 1, 1, 1, 1]


@pytest.mark.parametrize("seed", range(10))
def test_generator_ranges(seed):
    q = generate_star_query(12, seed)
    assert all(10 <= c <= 100_000 for c in q.cardinalities)
    for a, b, s in q.edges:
        floor = 10 / min(q.cardinalities[a], q.cardinalities[b])
        assert floor <= s <= 1


def test_generator_is_deterministic():
    assert dump_query(generate_star_query(9, 42)) == dump_query(generate_star_query(9, 42))
    assert dump_query(generate_star_query(9, 42)) != dump_query(generate_star_query(9, 43))
    q = generate_star_query(9, 42)
    assert load_query(dump_query(q)) == q


def test_generator_rejects_tiny():
    with pytest.raises(InvalidArguments):
        generate_star_query(1, 0)


def test_linear_enumeration_count():
    q = generate_star_query(3, 0)
    assert len(enumerate_plan_costs(q, "linear")) == math.factorial(3) * 3**2


def test_bushy_tree_count_is_catalan():
    trees = list(bushy_trees(full_set(4)))
    assert len(trees) == 5 * math.factorial(4) == 120
    assert len(set(trees)) == 120


def test_left_deep_trees_are_left_deep():
    q = generate_star_query(4, 1)
    p = build_plan(q, _to_prefix_tree(order_to_tree((2, 0, 3, 1))), 1)
    assert is_left_deep(p)


def _to_prefix_tree(tree):
    if isinstance(tree, int):
        return ("S", tree, 0)
    return ("J", 0, _to_prefix_tree(tree[0]), _to_prefix_tree(tree[1]))


@pytest.mark.parametrize("space,n", [("linear", 5), ("bushy", 5), ("linear", 6)])
def test_oracle_equals_literal_enumeration(space, n):
    for seed in range(3):
        q = generate_star_query(n, seed)
        allc = enumerate_plan_costs(q, space)
        assert brute_force_oracle(q, space).cost == pytest.approx(min(c[0] for c in allc), rel=1e-12)
        two = enumerate_plan_costs(q, space, objectives=2)
        assert list(brute_force_oracle(q, space, objectives=2).front) == pytest.approx(
            pareto_front(two), rel=1e-12)


def test_oracle_refuses_large_queries():
    with pytest.raises(TooLarge):
        brute_force_oracle(generate_star_query(11, 0), "linear")
    with pytest.raises(TooLarge):
        brute_force_oracle(generate_star_query(9, 0), PlanSpace.BUSHY)


def test_oracle_agrees_with_optimizer_on_fifty_queries():
    for seed in range(50):
        q = generate_star_query(6, seed)
        for space in ("linear", "bushy"):
            (p,) = serial_baseline(q, space)
            assert p.cost[0] == pytest.approx(brute_force_oracle(q, space).cost, rel=1e-9)


def test_serial_baseline_matches_master_single_worker():
    q = generate_star_query(9, 1)
    (a,) = serial_baseline(q, "linear")
    rep = master_optimize(q, 1, "linear")
    assert rep.global_best[0].cost == a.cost


def test_serial_baseline_speed_smoke():
    q = generate_star_query(10, 0)
    start = time.perf_counter()
    serial_baseline(q, "linear")
    assert time.perf_counter() - start < 1.0


def test_multi_objective_baseline_alpha_covers_front():
    q = generate_star_query(8, 3)
    plans = serial_baseline(q, "linear", objectives=2, alpha=10)
    for f in brute_force_oracle(q, "linear", objectives=2).front:
        assert any(all(c <= 10 * x for c, x in zip(p.cost, f)) for p in plans)


def test_pareto_front():
    assert pareto_front([(1, 5), (2, 2), (3, 3), (1, 5), (5, 1)]) == [(1, 5), (2, 2), (5, 1)]
