"""Experiment driver: drops, reuse-1 baselines, the proposed search and reports."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import platform
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from . import __version__
from .allocator import log_utility
from .config import ExperimentConfig
from .patterns import Pattern, PatternSet, enumerate_all, resolve_patterns
from .rates import RateTensor
from .scenario import GainTable, Scenario, build_drop
from .search import Solution, cell_biases, initial_association, make_solution, solve_scenario

log = logging.getLogger(__name__)

METRICS = ("p5", "p50", "p95", "sum_rate", "log_utility")


@dataclass
class MetricsReport:
    p5: float
    p50: float
    p95: float
    sum_rate: float
    log_utility: float
    n_users: int

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


@dataclass
class DropResult:
    n_users: int
    drop: int
    seed: int
    strategy: str
    metrics: MetricsReport | None
    rates: np.ndarray | None = None
    solution: Solution | None = None
    error: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(p / 100.0 * len(v) - 1e-12))
    return float(v[rank - 1])


def compute_metrics(per_user_rates, weights=None) -> MetricsReport:
    r = np.asarray(per_user_rates, dtype=float)
    if np.any(r < 0):
        raise ValueError("rates must be non-negative")
    w = np.ones(len(r)) if weights is None else np.asarray(weights, float)
    return MetricsReport(nearest_rank(r, 5), nearest_rank(r, 50), nearest_rank(r, 95),
                         float(r.sum()), log_utility(r, w), len(r))


def reuse1_patterns(n_cells: int) -> PatternSet:
    return PatternSet([Pattern((True,) * n_cells)])


def baseline_reuse1(scenario: Scenario, gains: GainTable, rates: RateTensor,
                    pico_bias_db: float) -> Solution:
    """Biased max-received-power association with all bandwidth on the reuse-1 pattern."""
    if rates.active is None:
        raise ValueError("baseline needs a rate tensor built from a pattern set")
    hit = np.flatnonzero(rates.active.all(axis=1))
    if not len(hit):
        raise ValueError("reuse-1 pattern missing from the pattern set")
    pi = np.zeros(rates.n_patterns)
    pi[hit[0]] = 1.0
    serving = initial_association(gains.rx_power_dbm, cell_biases(scenario, 0.0, pico_bias_db))
    return make_solution(serving, pi, rates, scenario.weights)


def strategy_name(bias: float) -> str:
    return f"reuse1_{bias:g}dB"


def run_drop(cfg: ExperimentConfig, n_users: int, drop: int, compare_full: bool = False,
             keep_solutions: bool = False) -> list[DropResult]:
    """All strategies on one drop (seed = seed_base + drop)."""
    seed = cfg.seed_base + drop
    scen_cfg = replace(cfg.scenario, n_users=n_users)
    out: list[DropResult] = []
    try:
        scenario, gains = build_drop(scen_cfg, seed)
    except Exception as exc:  # placement failures are recorded, not fatal
        log.error("drop %d (K=%d) failed: %s", drop, n_users, exc)
        return [DropResult(n_users, drop, seed, "scenario", None, error=str(exc))]
    W = scen_cfg.radio.bandwidth

    def record(name, fn):
        t0 = time.perf_counter()
        try:
            sol, extra = fn()
            rates = sol.user_rates(W)
            out.append(DropResult(n_users, drop, seed, name, compute_metrics(rates, scenario.weights),
                                  rates, sol if keep_solutions else None,
                                  seconds=time.perf_counter() - t0, extra=extra))
        except Exception as exc:
            log.error("drop %d (K=%d) strategy %s failed: %s", drop, n_users, name, exc)
            out.append(DropResult(n_users, drop, seed, name, None, error=str(exc)))

    if cfg.biases:
        r1 = RateTensor.from_gains(gains, scenario, reuse1_patterns(scenario.n_cells))
        for bias in cfg.biases:
            record(strategy_name(bias), lambda b=bias: (baseline_reuse1(scenario, gains, r1, b), {}))

    def proposed(patterns: PatternSet):
        def fn():
            rates = RateTensor.from_gains(gains, scenario, patterns)
            res = solve_scenario(scenario, gains, rates, cfg.search)
            support = int(np.sum(res.best.pi > 1e-4))
            return res.best, {"initial_utility": res.initial.utility, "support": support,
                              "n_patterns": len(patterns)}
        return fn

    if cfg.include_proposed:
        record("proposed", proposed(resolve_patterns(cfg.patterns, scenario)))
    if compare_full:
        record("proposed_full", proposed(enumerate_all(scenario.n_cells)))
    return out


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   compare_full: bool = False, keep_solutions: bool = False) -> dict:
    """Every (user count, drop); writes per-drop / per-user / summary CSVs when out_dir is set."""
    results: list[DropResult] = []
    for n_users in cfg.user_counts:
        for drop in range(cfg.drops):
            results.extend(run_drop(cfg, n_users, drop, compare_full, keep_solutions))
    summary = summarize(results)
    ratios = pattern_ratios(summary) if compare_full else []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_per_drop(results, out / "per_drop.csv")
        write_per_user(results, out / "per_user.csv")
        write_rows(summary, out / "summary.csv")
        if ratios:
            write_rows(ratios, out / "pattern_ratios.csv")
        write_metadata(out / "metadata.txt", cfg, compare_full=compare_full)
    failures = [r for r in results if r.error]
    return {"results": results, "summary": summary, "ratios": ratios, "failures": failures}


def per_drop_rows(results: Iterable[DropResult]) -> list[dict]:
    rows = []
    for r in results:
        row = {"n_users": r.n_users, "drop": r.drop, "seed": r.seed, "strategy": r.strategy}
        if r.metrics is not None:
            row.update({m: getattr(r.metrics, m) for m in METRICS})
        else:
            row.update({m: "" for m in METRICS})
        row["seconds"] = round(r.seconds, 3)
        row["support"] = r.extra.get("support", "")
        row["error"] = r.error
        rows.append(row)
    return rows


def summarize(results: Iterable[DropResult | dict]) -> list[dict]:
    """Drop-averaged metrics per (n_users, strategy); failed drops are skipped."""
    groups: dict[tuple[int, str], list[dict]] = defaultdict(list)
    for r in results:
        row = per_drop_rows([r])[0] if isinstance(r, DropResult) else r
        if row.get("error") or row.get("log_utility") in ("", None):
            continue
        groups[(int(row["n_users"]), row["strategy"])].append(row)
    summary = []
    for (n_users, strategy), rows in sorted(groups.items()):
        entry = {"n_users": n_users, "strategy": strategy, "drops": len(rows)}
        for m in METRICS:
            entry[m] = float(np.mean([float(r[m]) for r in rows]))
        summary.append(entry)
    return summary


def pattern_ratios(summary: list[dict], restricted: str = "proposed",
                   full: str = "proposed_full") -> list[dict]:
    """Restricted / full-enumeration metric ratios per user count."""
    by = {(s["n_users"], s["strategy"]): s for s in summary}
    out = []
    for n in sorted({s["n_users"] for s in summary}):
        if (n, restricted) in by and (n, full) in by:
            a, b = by[(n, restricted)], by[(n, full)]
            out.append({"n_users": n, **{m: a[m] / b[m] for m in METRICS}})
    return out


def write_rows(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    if not rows:
        path.write_text("")
        return path
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def write_per_drop(results: list[DropResult], path: str | Path) -> Path:
    return write_rows(per_drop_rows(results), path)


def write_per_user(results: list[DropResult], path: str | Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_users", "drop", "strategy", "user", "throughput_bps"])
        for r in results:
            if r.rates is None:
                continue
            for k, v in enumerate(r.rates):
                w.writerow([r.n_users, r.drop, r.strategy, k + 1, repr(float(v))])
    return Path(path)


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_metadata(path: str | Path, cfg: ExperimentConfig, **extra) -> Path:
    meta = {"package": "hetreuse", "version": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "log_base": "e", "percentiles": "nearest-rank", **extra,
            "config": dataclasses.asdict(cfg)}
    Path(path).write_text(yaml.safe_dump(meta, sort_keys=False, default_flow_style=None))
    return Path(path)


def table2(summary: list[dict]) -> list[dict]:
    """Log-utility pivot: one row per user count, one column per strategy."""
    rows: dict[int, dict] = {}
    for s in summary:
        rows.setdefault(s["n_users"], {"n_users": s["n_users"]})[s["strategy"]] = s["log_utility"]
    return [rows[n] for n in sorted(rows)]
