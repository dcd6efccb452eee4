"""Per-user throughput samples and empirical CDFs for each strategy.

Runs the study and writes ``cdf.csv`` (strategy, throughput, cumulative
fraction) ready for any plotting tool.
"""
import argparse
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from hetreuse.config import load_config
from hetreuse.harness import run_experiment, write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--users", type=int, default=90)
    ap.add_argument("--drops", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results/fig3"))
    args = ap.parse_args()

    cfg = replace(load_config(args.config), user_counts=(args.users,), drops=args.drops)
    res = run_experiment(cfg, args.out)
    samples = defaultdict(list)
    for r in res["results"]:
        if r.rates is not None:
            samples[r.strategy].extend(r.rates.tolist())
    rows = []
    for strategy, values in sorted(samples.items()):
        v = np.sort(values)
        frac = np.arange(1, len(v) + 1) / len(v)
        rows.extend({"strategy": strategy, "throughput_bps": float(x), "cdf": float(f)}
                    for x, f in zip(v, frac))
        print(f"{strategy:>14}: median {np.median(v) / 1e6:.3f} Mbit/s")
    write_rows(rows, args.out / "cdf.csv")


if __name__ == "__main__":
    main()
