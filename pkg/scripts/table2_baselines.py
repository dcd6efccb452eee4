"""Log-utility of the joint search against reuse-1 range-expansion baselines.

    python scripts/table2_baselines.py --users 90 180 300 --drops 5 --out results/table2
"""
import argparse
from dataclasses import replace
from pathlib import Path

from hetreuse.config import load_config
from hetreuse.harness import run_experiment, table2, write_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--users", type=int, nargs="+", default=[90])
    ap.add_argument("--drops", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results/table2"))
    args = ap.parse_args()

    cfg = replace(load_config(args.config), user_counts=tuple(args.users), drops=args.drops)
    res = run_experiment(cfg, args.out)
    rows = table2(res["summary"])
    write_rows(rows, args.out / "table_log_utility.csv")
    for row in rows:
        print("  ".join(f"{k}={v:.2f}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in row.items()))


if __name__ == "__main__":
    main()
