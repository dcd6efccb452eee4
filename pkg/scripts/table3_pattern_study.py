"""Candidate patterns versus full enumeration: restricted / full metric ratios.

The 15-cell layout enumerates 32767 patterns (a few minutes per 5 drops);
``--reduced`` uses 2 macros with 2 picos each (63 patterns).
"""
import argparse
from dataclasses import replace
from pathlib import Path

from hetreuse.config import load_config
from hetreuse.harness import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--drops", type=int, default=5)
    ap.add_argument("--users", type=int, default=90)
    ap.add_argument("--reduced", action="store_true")
    ap.add_argument("--out", type=Path, default=Path("results/table3"))
    args = ap.parse_args()

    cfg = load_config(args.config)
    scen = cfg.scenario
    if args.reduced:
        scen = replace(scen, n_macros=2, picos_per_macro=2)
    cfg = replace(cfg, scenario=scen, biases=(), drops=args.drops, user_counts=(args.users,))
    res = run_experiment(cfg, args.out, compare_full=True)
    for row in res["ratios"]:
        print(", ".join(f"{k}: {v:.4f}" if isinstance(v, float) else f"{k}: {v}"
                        for k, v in row.items()))


if __name__ == "__main__":
    main()
