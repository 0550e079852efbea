"""Command-line entry point: ``apfbm <experiment> --config FILE [...]``."""

from __future__ import annotations

import argparse
import os
import sys

from .coeffexpr import theory_warnings
from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment

THREADS_ENV = "APFBM_THREADS"


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apfbm", description=__doc__)
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="experiment configuration (INI)")
    p.add_argument("--seed", type=_u64, help="override mc.base_seed")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(base_seed=args.seed, output=args.out)
        threads = args.threads
        if threads is None:
            threads = cfg.threads or int(os.environ.get(THREADS_ENV, "1"))
        if threads < 1:
            raise ConfigError(f"threads must be positive, got {threads}")
        for msg in theory_warnings(cfg.expr):
            print(f"apfbm: warning: g = {cfg.g}: {msg} (outside the smooth bounded setting)",
                  file=sys.stderr)
        paths = run_experiment(cfg, args.experiment, threads=threads)
    except (ConfigError, ValueError, ArithmeticError, OSError) as exc:
        print(f"apfbm {args.experiment}: error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
