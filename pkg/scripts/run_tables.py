"""Run the table experiment for every shipped config and print median errors.

Usage: python scripts/run_tables.py [config names ...] [--jobs N] [--out DIR]
"""

import argparse
import time
from pathlib import Path

from heatsource.config import load_config
from heatsource.experiments import run_table

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = ["table1", "j_far", "j_near", "j1_far", "j1_near", "j2_far", "j2_near", "j3_far", "j3_near"]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", default=DEFAULT)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=str(ROOT / "out" / "tables"))
    args = p.parse_args()
    for name in args.names:
        cfg = load_config(ROOT / "configs" / f"{name}.toml")
        start = time.perf_counter()
        summary = run_table(cfg, Path(args.out) / name, jobs=args.jobs)
        took = time.perf_counter() - start
        for delta in sorted(cfg.deltas):
            e = summary.median_errors(delta)
            print(f"{name:8s} delta={delta:.2f}  r {e['r']:.2e}  theta {e['theta']:.2e}  "
                  f"x {e['x']:.2e}  y {e['y']:.2e}", flush=True)
        print(f"{name:8s} {took:.1f} s", flush=True)


if __name__ == "__main__":
    main()
