"""Command-line entry point: ``spatialrent run`` and ``spatialrent plot``."""
from __future__ import annotations

import argparse
import logging
import sys

from .benchmark import BenchmarkConfig, run_benchmark
from .errors import SpatialRentError
from .plots import emit_plots


def build_parser():
    p = argparse.ArgumentParser(prog="spatialrent", description="Spatial rent prediction benchmark")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the benchmark described by a YAML config")
    run.add_argument("--config", required=True, help="YAML config file")
    run.add_argument("--seed", type=int, help="master seed (overrides the file)")
    run.add_argument("--models", help="comma-separated subset of the configured models")
    run.add_argument("--out", help="output directory (overrides the file)")
    run.add_argument("--plots", action="store_true", help="also write SVG charts")
    plot = sub.add_parser("plot", help="write SVG charts from an output directory")
    plot.add_argument("results", help="directory holding results.csv and bands.csv")
    plot.add_argument("--out", help="chart directory (default: the results directory)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "plot":
            paths = emit_plots(args.results, args.out)
            for path in paths:
                print(path)
            return 0
        cfg = BenchmarkConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        if args.models:
            cfg.models = [m.strip() for m in args.models.split(",") if m.strip()]
        cfg.validate()
        out = run_benchmark(cfg)
        if args.plots:
            emit_plots(cfg.out)
        print(f"{len(out['results'])} result rows, {len(out['failures'])} failures -> {cfg.out}")
        return 1 if out["failures"] else 0
    except SpatialRentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
