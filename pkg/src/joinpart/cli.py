"""Command-line front end: optimize, bench, verify, worker."""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import statistics
import sys
from pathlib import Path

from .costs import REGISTRIES
from .errors import InvalidArguments, WorkerFailure
from .model import PlanSpace, to_prefix
from .orchestrator import BACKENDS, master_optimize, serve_worker
from .partitioning import max_workers, round_workers
from .workload import generate_star_query, load_query
from . import verify as V

CSV_COLUMNS = [
    "space", "n", "m", "query_seed", "master_ms", "max_worker_ms", "bytes_sent",
    "max_memo_entries", "plans_generated", "split_pairs", "best_cost",
]
MEDIAN_SEED = "median"


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", choices=[s.value for s in PlanSpace], default="linear")
    p.add_argument("--tables", type=int, default=8)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objectives", type=int, choices=(1, 2), default=1)
    p.add_argument("--alpha", type=float, default=None, help="approximation factor (default 10)")
    p.add_argument("--backend", choices=BACKENDS, default="threads")
    p.add_argument("--endpoints", default="", help="comma-separated host:port list")
    p.add_argument("--cost-model", choices=sorted(REGISTRIES), default="default")


def _check_run_flags(parser, args) -> None:
    if args.alpha is not None and args.objectives != 2:
        parser.error("--alpha requires --objectives 2")
    if args.alpha is None:
        args.alpha = 10.0
    if args.alpha < 1:
        parser.error("--alpha must be at least 1")
    if args.tables < 2:
        parser.error("--tables must be at least 2")
    if args.workers < 1:
        parser.error("--workers must be positive")
    if args.backend == "sockets" and not args.endpoints:
        parser.error("--backend sockets requires --endpoints")
    args.endpoints = [e for e in args.endpoints.split(",") if e]


def _effective(parser, requested: int, n: int, space: str) -> int:
    m = round_workers(requested)
    if m != requested:
        print(f"warning: {requested} workers rounded down to {m}", file=sys.stderr)
    limit = max_workers(n, space)
    if m > limit:
        parser.error(f"{m} workers need more constraints than {n} tables allow "
                     f"in a {space} space (at most {limit} workers)")
    return m


def cmd_optimize(parser, args) -> int:
    _check_run_flags(parser, args)
    if args.query:
        q = load_query(Path(args.query).read_text())
    else:
        q = generate_star_query(args.tables, args.seed)
    m = _effective(parser, args.workers, q.n, args.space)
    rep = master_optimize(q, m, args.space, args.objectives, args.backend, args.alpha,
                          args.cost_model, args.endpoints)
    for p in rep.global_best:
        cost = ",".join(repr(c) for c in p.cost)
        print(f"plan: {to_prefix(p)} cost=[{cost}] card={p.card!r}")
    stats = rep.per_worker_stats
    print("stats:")
    print(f"  workers: {rep.m}")
    print(f"  master_ms: {rep.master_wall_time * 1e3:.3f}")
    print(f"  max_worker_ms: {rep.max_worker_wall_time * 1e3:.3f}")
    print(f"  messages: {rep.messages}")
    print(f"  bytes_sent: {rep.total_bytes_sent}")
    print(f"  max_memo_entries: {max(s.peak_memo_entries for s in stats)}")
    print(f"  plans_generated: {sum(s.plans_generated for s in stats)}")
    print(f"  split_pairs: {sum(s.split_pairs for s in stats)}")
    return 0


def bench_rows(space, n, workers, queries, seed, objectives=1, alpha=10.0, backend="threads",
               endpoints=(), cost_model="default"):
    """One row per (m, query) for m = 1, 2, 4, ... up to ``workers``, then per-m medians."""
    rows = []
    sweep = []
    m = 1
    while m <= workers:
        sweep.append(m)
        m *= 2
    for m in sweep:
        per_m = []
        for i in range(queries):
            q = generate_star_query(n, seed + i)
            rep = master_optimize(q, m, space, objectives, backend, alpha, cost_model, list(endpoints))
            st = rep.per_worker_stats
            per_m.append({
                "space": space, "n": n, "m": m, "query_seed": seed + i,
                "master_ms": rep.master_wall_time * 1e3,
                "max_worker_ms": rep.max_worker_wall_time * 1e3,
                "bytes_sent": rep.total_bytes_sent,
                "max_memo_entries": max(s.peak_memo_entries for s in st),
                "plans_generated": max(s.plans_generated for s in st),
                "split_pairs": max(s.split_pairs for s in st),
                "best_cost": min(p.cost[0] for p in rep.global_best),
            })
        rows.extend(per_m)
        med = {"space": space, "n": n, "m": m, "query_seed": MEDIAN_SEED}
        for col in CSV_COLUMNS[4:]:
            med[col] = statistics.median(r[col] for r in per_m)
        rows.append(med)
    return rows


def read_bench_csv(path) -> list[dict]:
    """Parse rows written by ``bench`` back into typed values."""
    ints = {"n", "m", "bytes_sent", "max_memo_entries", "plans_generated", "split_pairs"}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            typed = {}
            for k, v in row.items():
                if k == "space":
                    typed[k] = v
                elif k == "query_seed":
                    typed[k] = v if v == MEDIAN_SEED else int(v)
                elif k in ints and row["query_seed"] != MEDIAN_SEED:
                    typed[k] = int(v)
                else:
                    typed[k] = float(v)
            out.append(typed)
    return out


def cmd_bench(parser, args) -> int:
    _check_run_flags(parser, args)
    top = _effective(parser, args.workers, args.tables, args.space)
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    with fh if args.out else contextlib.nullcontext(fh):
        rows = bench_rows(args.space, args.tables, top, args.queries, args.seed, args.objectives,
                          args.alpha, args.backend, args.endpoints, args.cost_model)
        w = csv.DictWriter(fh, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return 0


PROPERTIES = ("counts", "coverage", "union", "oracle", "alpha", "splits", "memory",
              "messages", "backends", "walltime")


def verify_suite(prop: str = "all", space=None, tables=None, workers=None, queries=None, seed=0):
    """Desk-scale defaults; any given flag narrows the corresponding check."""
    spaces = [space] if space else ["linear", "bushy"]
    results = []
    want = PROPERTIES if prop == "all" else (prop,)
    for name in want:
        if name == "counts":
            for sp in spaces:
                ns = [tables] if tables else range(2, 15 if sp == "linear" else 13)
                ls = [workers.bit_length() - 1] if workers else None
                results.append(V.check_counts(sp, ns, ls))
        elif name == "coverage":
            for sp in spaces:
                if tables and workers:
                    cases = [(tables, workers)]
                elif sp == "linear":
                    cases = [(4, 2), (4, 4), (5, 2), (5, 4), (6, 2), (6, 4), (6, 8)]
                else:
                    cases = [(3, 2), (4, 2), (5, 2), (6, 2), (6, 4)]
                for n, m in cases:
                    check = V.check_linear_coverage if sp == "linear" else V.check_bushy_coverage
                    results.append(check(n, m))
        elif name == "union":
            for sp in spaces:
                n = tables or 6
                results.append(V.check_union(sp, n, workers or max_workers(n, sp)))
        elif name == "oracle":
            for sp in spaces:
                ns = [tables] if tables else range(4, 9 if sp == "linear" else 8)
                ms = [workers] if workers else (1, 2, 4)
                results.append(V.check_oracle(sp, ns, ms, queries or 5, seed))
        elif name == "alpha":
            ns = [tables] if tables else range(4, 8)
            results.append(V.check_alpha_coverage(ns, [workers] if workers else (1, 4),
                                                  queries or 5, seed=seed))
        elif name == "splits":
            results.append(V.check_split_ratio())
        elif name == "memory":
            for sp in spaces:
                results.append(V.check_memory_scaling(sp, tables or (12 if sp == "linear" else 9)))
        elif name == "messages":
            results.append(V.check_messages(tables or 12, seed=seed))
        elif name == "backends":
            results.append(V.check_backends(tables or 8, workers or 4, queries or 3, seed))
        elif name == "walltime":
            results.append(V.check_wall_time(tables or 18, seed=seed))
    return results


def cmd_verify(parser, args) -> int:
    results = verify_suite(args.property, args.space, args.tables, args.workers, args.queries,
                           args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    skipped = sum(r.skipped for r in results)
    passed = len(results) - len(failed) - skipped
    print(f"{passed} passed, {skipped} skipped, {len(failed)} failed")
    return 0 if not failed else 1


def cmd_worker(parser, args) -> int:
    serve_worker(args.port, args.host, announce=lambda s: print(s, flush=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="joinpart", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize one seeded star query")
    _add_run_flags(p)
    p.add_argument("--query", help="JSON query file instead of a generated one")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bench", help="sweep worker counts and emit CSV")
    _add_run_flags(p)
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run invariant checks")
    p.add_argument("--property", choices=("all",) + PROPERTIES, default="all")
    p.add_argument("--space", choices=[s.value for s in PlanSpace])
    p.add_argument("--tables", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--queries", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("worker", help="serve partition tasks over TCP")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_worker)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.func(sub, args)
    except (InvalidArguments, WorkerFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
