"""Command-line interface: ``grainspill <stage> --config run.ini``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import OUTPUT_ENV, ConfigError, RunConfig, load_config
from .pipeline import STAGES, StageError, run_all, run_stage
from .report import read_matrix, write_heatmap
from .synthetic import write_fixture

EXIT_USAGE = 2
EXIT_FAILURE = 3

HELP = {
    "stats": "load prices, compute percent log returns and descriptive statistics",
    "decompose": "ICEEMDAN decomposition of every return series",
    "reconstruct": "mode measures and short/medium/long-term components",
    "connect": "static, rolling and average connectedness tables and heatmap",
    "network": "net spillover networks as DOT, JSON and CSV",
    "drivers": "random-forest importance of the factors for every TCI series",
    "all": "run every stage in order",
}


def _add_run_options(p):
    p.add_argument("-c", "--config", required=True, help="run configuration file (INI key = value)")
    p.add_argument("-o", "--output", help=f"output root (overrides ${OUTPUT_ENV} and [run] output)")
    p.add_argument("--threads", type=int, help="worker cap; results do not depend on it (default 1)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--window", type=int, help="rolling window length (default 252)")
    p.add_argument("--step", type=int, help="rolling window step (default 1)")
    p.add_argument("--ensemble", type=int, help="ICEEMDAN noise realizations I (default 100)")
    p.add_argument("--noise", type=float, help="ICEEMDAN noise amplitude epsilon (default 0.2)")
    p.add_argument("--k", type=int, help="number of timescale components (default 3)")
    p.add_argument("--ratio", type=float, help="forest training share (default 0.8)")
    p.add_argument("--split", choices=["random", "chronological"], help="forest split mode (default random)")
    p.add_argument("--mode", choices=["r2", "gfevd"], help="connectedness method (default r2)")


def build_parser():
    parser = argparse.ArgumentParser(prog="grainspill", description="Multiscale risk-spillover pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        _add_run_options(sub.add_parser(name, help=HELP[name], description=HELP[name]))
    fx = sub.add_parser("fixture", help="write the synthetic fixture (prices, factors, config)")
    fx.add_argument("directory")
    fx.add_argument("--length", type=int, default=3000, help="number of returns (default 3000)")
    fx.add_argument("--seed", type=int, default=0)
    fx.add_argument("--ensemble", type=int, default=25, help="ICEEMDAN realizations in the written config")
    fx.add_argument("--step", type=int, default=5, help="rolling step in the written config")
    hm = sub.add_parser("heatmap", help="render a square matrix CSV as an SVG heatmap")
    hm.add_argument("matrix")
    hm.add_argument("svg")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(
        seed=args.seed, threads=args.threads, window=args.window, step=args.step, ensemble=args.ensemble,
        noise=args.noise, k=args.k, ratio=args.ratio, split=args.split, mode=args.mode,
    )
    return cfg.validate()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fixture":
            path = write_fixture(args.directory, T=args.length, seed=args.seed, ensemble=args.ensemble, step=args.step)
            print(path)
            return 0
        if args.command == "heatmap":
            write_heatmap(read_matrix(args.matrix), args.svg)
            return 0
        cfg = _config(args)
        root = cfg.output_root(args.output)
        Path(root).mkdir(parents=True, exist_ok=True)
        if args.command == "all":
            run_all(cfg, root)
        else:
            run_stage(args.command, cfg, root)
        print(root)
        return 0
    except ConfigError as exc:
        print(f"grainspill: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StageError, ValueError, OSError) as exc:
        print(f"grainspill {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
