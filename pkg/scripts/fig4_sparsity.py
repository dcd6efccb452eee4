"""Which of the 2^B - 1 patterns survive when the split is optimised over all of them.

Writes one row per (drop, pattern) with pi above the threshold.
"""
import argparse
from pathlib import Path

import numpy as np

from hetreuse.allocator import truncate
from hetreuse.config import load_config
from hetreuse.harness import write_rows
from hetreuse.patterns import enumerate_all
from hetreuse.rates import RateTensor
from hetreuse.scenario import build_drop
from hetreuse.search import solve_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--drops", type=int, default=1)
    ap.add_argument("--threshold", type=float, default=1e-4)
    ap.add_argument("--out", type=Path, default=Path("results/fig4"))
    args = ap.parse_args()

    cfg = load_config(args.config)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for drop in range(args.drops):
        seed = cfg.seed_base + drop
        scenario, gains = build_drop(cfg.scenario, seed)
        patterns = enumerate_all(scenario.n_cells)
        rates = RateTensor.from_gains(gains, scenario, patterns)
        res = solve_scenario(scenario, gains, rates, cfg.search)
        pi = truncate(res.best.pi)
        kept = np.flatnonzero(pi > args.threshold)
        print(f"drop {drop}: {len(kept)} of {len(patterns)} patterns above {args.threshold:g}")
        for i in kept[np.argsort(-pi[kept])]:
            rows.append({"drop": drop, "pattern": str(patterns[i]), "fraction": float(pi[i]),
                         "active_cells": " ".join(map(str, patterns[i].active_set()))})
    write_rows(rows, args.out / "surviving_patterns.csv")


if __name__ == "__main__":
    main()
