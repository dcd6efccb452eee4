"""Command line entry point: ``hetreuse <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .allocator import optimize_allocation, utility
from .config import SearchParams, load_config
from .harness import (baseline_reuse1, compute_metrics, read_rows, reuse1_patterns,
                      run_experiment, strategy_name, summarize, pattern_ratios, table2,
                      write_metadata, write_rows)
from .oracle import brute_force_joint, grid_allocation, random_instance
from .patterns import candidate_patterns, resolve_patterns
from .rates import RateTensor
from .scenario import build_drop, write_scenario_csv
from .search import solve_scenario, tabu_search, write_trace



def _common(p: argparse.ArgumentParser, patterns: bool = False) -> None:
    p.add_argument("--config", type=Path, help="YAML configuration file")
    p.add_argument("--seed", type=int, help="drop seed (overrides experiment.seed_base)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    if patterns:
        p.add_argument("--patterns", default=None,
                       help="candidates | full | path to a file of 0/1 pattern strings")


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed_base=args.seed)
    if getattr(args, "patterns", None):
        cfg = replace(cfg, patterns=args.patterns)
    args.out.mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_generate(args) -> int:
    cfg = _load(args)
    scenario, gains = build_drop(cfg.scenario, cfg.seed_base)
    write_scenario_csv(scenario, args.out)
    candidate_patterns(scenario).save(args.out / "candidate_patterns.txt")
    write_metadata(args.out / "metadata.txt", cfg, command="generate", seed=cfg.seed_base)
    print(f"{scenario.n_cells} cells, {scenario.n_users} users -> {args.out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load(args)
    scenario, gains = build_drop(cfg.scenario, cfg.seed_base)
    patterns = resolve_patterns(cfg.patterns, scenario)
    rates = RateTensor.from_gains(gains, scenario, patterns)
    t0 = time.perf_counter()
    res = solve_scenario(scenario, gains, rates, cfg.search)
    W = cfg.scenario.radio.bandwidth
    user_rates = res.best.user_rates(W)
    write_trace(res, args.out / "trace.csv")
    write_rows([{"user": k + 1, "serving_cell": int(b) + 1, "throughput_bps": float(r)}
                for k, (b, r) in enumerate(zip(res.best.serving, user_rates))],
               args.out / "per_user.csv")
    write_rows([{"pattern": str(patterns[i]), "fraction": float(res.best.pi[i])}
                for i in np.flatnonzero(res.best.pi > 0)], args.out / "allocation.csv")
    m = compute_metrics(user_rates, scenario.weights)
    write_rows([{"strategy": "proposed", **m.as_dict()}], args.out / "summary.csv")
    write_metadata(args.out / "metadata.txt", cfg, command="optimize", seed=cfg.seed_base,
                   n_patterns=len(patterns), iterations=res.iterations,
                   diversifications=res.diversifications,
                   initial_utility=res.initial.utility, final_utility=res.best.utility,
                   seconds=round(time.perf_counter() - t0, 3))
    print(f"utility {res.initial.utility:.2f} -> {res.best.utility:.2f} "
          f"({res.iterations} iterations, {len(patterns)} patterns)")
    return 0


def cmd_baseline(args) -> int:
    cfg = _load(args)
    scenario, gains = build_drop(cfg.scenario, cfg.seed_base)
    rates = RateTensor.from_gains(gains, scenario, reuse1_patterns(scenario.n_cells))
    rows = []
    for bias in cfg.biases:
        sol = baseline_reuse1(scenario, gains, rates, bias)
        m = compute_metrics(sol.user_rates(cfg.scenario.radio.bandwidth), scenario.weights)
        rows.append({"strategy": strategy_name(bias), **m.as_dict()})
        print(f"{rows[-1]['strategy']:>14}: log-utility {m.log_utility:.2f}")
    write_rows(rows, args.out / "baseline.csv")
    write_metadata(args.out / "metadata.txt", cfg, command="baseline", seed=cfg.seed_base)
    return 0


def cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    args.out.mkdir(parents=True, exist_ok=True)
    rows, ok = [], True
    for n in range(args.instances):
        K, I = 4 + n % 3, 3 + n % 2
        inst = random_instance(rng, K, 3, I)
        _, _, best = brute_force_joint(inst)
        res = tabu_search(inst.tensor(), inst.weights,
                          SearchParams(max_iter_total=200, diversification=2, seed=n))
        rel = (best - res.best.utility) / abs(best)
        rows.append({"instance": n, "kind": "joint", "K": K, "I": I, "oracle": best,
                     "solver": res.best.utility, "rel_gap": rel})
        ok &= res.best.utility >= 0.99 * best
    for n in range(args.instances):
        inst = random_instance(rng, 5, 3, 3)
        rates = inst.tensor()
        serving = rng.integers(0, 3, size=5)
        if not (rates.serving_rates(serving) > 0).any(axis=1).all():
            continue
        alloc = optimize_allocation(serving, rates, inst.weights, tol=1e-10)
        gpi = grid_allocation(serving, rates, inst.weights, 1e-3)
        gval = utility(serving, gpi, rates, inst.weights).value
        rows.append({"instance": n, "kind": "split", "K": 5, "I": 3, "oracle": gval,
                     "solver": alloc.value, "rel_gap": alloc.gap})
        ok &= abs(alloc.value - gval) <= 1e-4
    write_rows(rows, args.out / "oracle.csv")
    for kind in ("joint", "split"):
        sub = [r for r in rows if r["kind"] == kind]
        worst = max(abs(r["oracle"] - r["solver"]) for r in sub)
        print(f"{kind:>5}: {len(sub)} instances, worst |oracle - solver| = {worst:.3g}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_experiment(args) -> int:
    cfg = _load(args)
    res = run_experiment(cfg, args.out, compare_full=args.compare_full)
    for row in table2(res["summary"]):
        print(row)
    for row in res["ratios"]:
        print("restricted/full:", row)
    if res["failures"]:
        print(f"{len(res['failures'])} failed drop(s)", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(read_rows(path))
    summary = summarize(rows)
    args.out.mkdir(parents=True, exist_ok=True)
    write_rows(summary, args.out / "summary.csv")
    write_rows(table2(summary), args.out / "table_log_utility.csv")
    ratios = pattern_ratios(summary)
    if ratios:
        write_rows(ratios, args.out / "pattern_ratios.csv")
    for row in table2(summary):
        print(row)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetreuse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit scenario CSVs for one drop")
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("optimize", help="single tabu-search run with full trace")
    _common(p, patterns=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("baseline", help="reuse-1 bias sweep on one drop")
    _common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("oracle", help="brute-force validation on small instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="full study over user counts and drops")
    _common(p, patterns=True)
    p.add_argument("--compare-full", action="store_true",
                   help="also run the full pattern enumeration and report ratios")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="aggregate per-drop CSVs into summary tables")
    p.add_argument("inputs", nargs="+", type=Path, help="per_drop.csv files")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
