"""Command line entry point: ``heatsource <command> --config FILE``.

Exit status is 0 on success, 1 when a verification check fails and 2 for
configuration or I/O problems.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .experiments import run_forward, run_inversion, run_table, run_verify

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatsource", description="Point-source heat experiments on the unit disc.")
    p.add_argument("command", choices=("forward", "invert", "table", "verify", "spectral"))
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="noise seed (unsigned 64-bit)")
    p.add_argument("--engine", choices=("fem", "spectral"), help="forward engine for data generation")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for the table runner")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, engine=args.engine, out_dir=args.out)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command in ("forward", "spectral"):
            if args.command == "spectral":
                cfg = replace(cfg, engine="spectral")
            traces = run_forward(cfg)
            print(f"wrote {len(traces)} flux trace(s) to {cfg.out_dir}")
        elif args.command == "invert":
            outcome = run_inversion(cfg)
            est = outcome.result.estimate
            e = outcome.errors
            print(f"estimate r={est.r_star:.6f} theta={est.theta_star:.6f} "
                  f"err_r={e['r']:.3e} err_theta={e['theta']:.3e} converged={outcome.result.converged}")
        elif args.command == "table":
            summary = run_table(cfg, jobs=args.jobs)
            for row in summary.rows:
                print(",".join(row.cells()))
        else:
            report = run_verify(cfg)
            for line in report.lines():
                print(line)
            return EXIT_OK if report.passed else EXIT_CHECK
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
