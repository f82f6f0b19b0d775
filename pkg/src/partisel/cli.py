"""Experiment orchestration: config loading, seeded runs, CSV/JSON output.

Subcommands:
  solve  --config cfg.json [--seed N] [--out DIR]   offline benchmark runs
  online --config cfg.json [--out DIR]              tracking episodes
  bench  SUITE [--data PATH] [--out DIR]            canned offline suites

Configs are JSON with a ``schema: 1`` field.  Every emitted number is a
function of (config, seed); the reported ``queries`` column is the log10
of the handle's evaluation counter, rounded to two decimals.  The
PARTISEL_THREADS environment variable caps how many independent
(solver, seed) runs execute concurrently.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .core import Partition
from .objectives import aoptimal_build, coverage_build, dpp_build
from .offline import (
    ScgConfig,
    SgaConfig,
    multinoulli_scg,
    multinoulli_sga,
    residual_random_greedy,
    standard_greedy,
)
from .tracking import Scenario, run_episode

SCHEMA_VERSION = 1
RESULT_FIELDS = ["solver", "instance", "seed", "obj", "queries", "wall_time_s", "config_hash"]


class ConfigError(Exception):
    pass


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"{p}: expected schema {SCHEMA_VERSION}, got {cfg.get('schema')!r}")
    return cfg


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]


def _max_workers() -> int:
    raw = os.environ.get("PARTISEL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _build_objective(spec: dict):
    kind = spec.get("kind")
    if kind == "coverage":
        handle, partition = coverage_build(
            int(spec["n"]), int(spec["k"]), float(spec.get("epsilon", 0.01))
        )
        return handle, partition, f"coverage-n{spec['n']}-k{spec['k']}"
    if kind == "dpp":
        path = Path(spec["data"])
        if not path.exists():
            raise ConfigError(f"data file not found: {path}")
        features = np.loadtxt(path, delimiter=",", ndmin=2)
        handle = dpp_build(features, spec.get("bandwidth"))
        group = int(spec.get("group_size", 25))
        n = handle.n
        communities = [list(range(lo, min(lo + group, n))) for lo in range(0, n, group)]
        partition = Partition(communities, [1] * len(communities))
        return handle, partition, f"dpp-{path.stem}"
    if kind == "aoptimal":
        path = Path(spec["data"])
        if not path.exists():
            raise ConfigError(f"data file not found: {path}")
        handle = aoptimal_build(path, seed=int(spec.get("prior_seed", 0)))
        groups = int(spec.get("groups", 10))
        rng = np.random.default_rng(int(spec.get("partition_seed", 0)))
        order = rng.permutation(handle.n)
        communities = [order[i::groups].tolist() for i in range(groups)]
        partition = Partition(communities, [1] * groups)
        return handle, partition, f"aoptimal-{path.stem}"
    raise ConfigError(f"unknown objective kind {kind!r}")


def _run_solver(objective_spec: dict, solver_spec: dict, seed: int) -> dict:
    handle, partition, instance = _build_objective(objective_spec)
    name = solver_spec.get("name")
    params = {k: v for k, v in solver_spec.items() if k != "name"}
    start = time.perf_counter()
    if name == "standard_greedy":
        subset, trace = standard_greedy(handle, partition)
    elif name == "residual_random_greedy":
        subset, trace = residual_random_greedy(handle, partition, np.random.default_rng(seed))
    elif name == "multinoulli_scg":
        subset, trace = multinoulli_scg(handle, partition, ScgConfig(seed=seed, **params))
    elif name == "multinoulli_sga":
        subset, trace = multinoulli_sga(handle, partition, SgaConfig(seed=seed, **params))
    else:
        raise ConfigError(f"unknown solver {name!r}")
    elapsed = time.perf_counter() - start
    return {
        "solver": trace.solver,
        "instance": instance,
        "seed": seed,
        "obj": round(trace.final_value, 6),
        "queries": round(math.log10(max(handle.query_count, 1)), 2),
        "wall_time_s": round(elapsed, 3),
        "subset": list(subset.elements),
        "reported_evaluations": trace.reported_evaluations,
        "query_count": handle.query_count,
    }


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out or cfg.get("out", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed] if args.seed is not None else [int(s) for s in cfg.get("seeds", [0])]
    solvers = cfg.get("solvers") or [cfg["solver"]]
    chash = _config_hash(cfg)

    jobs = [(solver, seed) for solver in solvers for seed in seeds]
    rows = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        futures = [
            pool.submit(_run_solver, cfg["objective"], solver, seed) for solver, seed in jobs
        ]
        for fut in futures:
            rows.append(fut.result())

    csv_path = out_dir / "results.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in RESULT_FIELDS[:-1]} | {"config_hash": chash})
    (out_dir / "trace.json").write_text(json.dumps(rows, indent=2))
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 0


def cmd_online(args) -> int:
    cfg = _load_config(args.config)
    out_dir = Path(args.out or cfg.get("out", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    sc = cfg.get("scenario", {})
    scenario = Scenario(
        num_agents=int(sc.get("agents", 20)),
        num_targets=int(sc.get("targets", 30)),
        mix=sc.get("mix", "4:5:1"),
        T=int(sc.get("T", 1250)),
        horizon=float(sc.get("horizon", 25.0)),
        speed_set=tuple(sc.get("speed_set", (2.0, 7.0, 12.0) if sc.get("mode") == "ekf" else (5.0, 10.0, 15.0))),
        mode=sc.get("mode", "facility"),
        seed=int(sc.get("seed", 0)),
    )
    policies = [p.lower() for p in cfg.get("policies", ["osga", "oscg", "random"])]
    if "random" not in policies:
        policies.append("random")  # baseline always included
    seeds = [int(s) for s in cfg.get("seeds", [0])]
    params = cfg.get("policy_params", {})

    summary = {}
    for policy in policies:
        for seed in seeds:
            trace = run_episode(scenario, policy, seed=seed, **params.get(policy, {}))
            name = f"{policy}_seed{seed}.csv"
            with (out_dir / name).open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "reward", "running_avg", "queries_log10"])
                for r in trace.rounds:
                    writer.writerow(
                        [
                            r.t,
                            f"{r.reward:.10g}",
                            f"{r.cumulative_reward / r.t:.10g}",
                            f"{math.log10(max(r.queries, 1)):.2f}",
                        ]
                    )
            summary[f"{policy}_seed{seed}"] = trace.final_running_average
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {len(summary)} episode CSVs to {out_dir}")
    return 0


COVERAGE_SUITE = [(20, 5), (30, 6), (40, 8), (50, 10)]


def cmd_bench(args) -> int:
    out_dir = Path(args.out or "bench_results")
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.suite == "coverage":
        objectives = [
            {"kind": "coverage", "n": n, "k": k, "epsilon": 0.01} for n, k in COVERAGE_SUITE
        ]
    elif args.suite == "dpp":
        if not args.data:
            print("error: the dpp suite needs --data pointing to a features CSV", file=sys.stderr)
            return 2
        objectives = [{"kind": "dpp", "data": args.data}]
    elif args.suite == "aoptimal":
        if not args.data:
            print("error: the aoptimal suite needs --data pointing to a libsvm file", file=sys.stderr)
            return 2
        objectives = [{"kind": "aoptimal", "data": args.data, "groups": 10}]
    else:
        print(f"error: unknown suite {args.suite!r}", file=sys.stderr)
        return 2

    solvers = [
        {"name": "standard_greedy"},
        {"name": "residual_random_greedy"},
        {"name": "multinoulli_sga", "L": 20, "T": 167},
        {"name": "multinoulli_sga", "L": 20, "T": 167, "auxiliary_c": 1.0},
        {"name": "multinoulli_scg", "T": 167, "L": args.scg_batch},
    ]
    seeds = list(range(args.repeats))
    rows = []
    for objective in objectives:
        cfg = {"schema": SCHEMA_VERSION, "objective": objective, "solvers": solvers, "seeds": seeds}
        chash = _config_hash(cfg)
        jobs = [(solver, seed) for solver in solvers for seed in seeds]
        with concurrent.futures.ThreadPoolExecutor(max_workers=_max_workers()) as pool:
            futures = [pool.submit(_run_solver, objective, solver, seed) for solver, seed in jobs]
            for fut in futures:
                row = fut.result()
                row["config_hash"] = chash
                rows.append(row)

    csv_path = out_dir / f"{args.suite}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in RESULT_FIELDS})
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="partisel")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run offline solvers from a JSON config")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_online = sub.add_parser("online", help="run tracking episodes from a JSON config")
    p_online.add_argument("--config", required=True)
    p_online.add_argument("--out", default=None)
    p_online.set_defaults(func=cmd_online)

    p_bench = sub.add_parser("bench", help="run a canned offline suite")
    p_bench.add_argument("suite", choices=["coverage", "dpp", "aoptimal"])
    p_bench.add_argument("--data", default=None)
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--repeats", type=int, default=5)
    p_bench.add_argument("--scg-batch", type=int, default=8)
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
