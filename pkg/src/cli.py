#!/usr/bin/env python3
"""Command-line front end: windconflict <subcommand> ...

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from typing import List, Optional
import argparse
import logging
import sys

from pydantic import ValidationError

from src.core.config import settings
from src.core.exceptions import ConfigError, PipelineError
from src.core.log_setup import configure_logging
from src.pipeline import stages
from src.services import apc, mukl

logger = logging.getLogger(__name__)

def _context(args: argparse.Namespace) -> stages.RunContext:
    return stages.RunContext.from_scenario(args.scenario, workers=args.workers)

def cmd_ingest(args: argparse.Namespace) -> int:
    ctx = _context(args)
    ens = stages.run_ingest(ctx)
    print(f"{ens.n_members} members on a {ens.grid.shape[0]}x{ens.grid.shape[1]} grid -> {ctx.paths.ensemble}")
    return 0

def cmd_decompose(args: argparse.Namespace) -> int:
    ctx = _context(args)
    expansion = stages.run_decompose(ctx)
    print(f"{'k':>4} {'eigenvalue':>14} {'percent':>10} {'cumulative':>11}")
    for k, lam, percent, cumulative in mukl.explained_variance_table(expansion):
        print(f"{k:>4} {lam:>14.6g} {percent:>9.4f}% {cumulative:>10.4f}%")
    print(f"archive: {ctx.paths.expansion}")
    return 0

def cmd_surrogate(args: argparse.Namespace) -> int:
    ctx = _context(args)
    index = stages.run_surrogate(ctx)
    print(f"{index.n_nodes} node tuples, {len(index.pairs)} surrogate(s), {len(index.failed)} failed pair(s)")
    if args.dump:
        for label, rel in index.pairs.items():
            surrogate = apc.load_surrogate(ctx.paths.root / rel)
            print(f"# {label}")
            print(apc.dump_coefficients(surrogate, every=args.dump_every), end="")
    return 0

def cmd_detect(args: argparse.Namespace) -> int:
    ctx = _context(args)
    report = stages.run_detect(ctx)
    print(stages.render_summary(report), end="")
    return 0

def cmd_report(args: argparse.Namespace) -> int:
    index = stages.run_report(args.run_dir)
    print((stages.RunPaths(args.run_dir).summary).read_text(encoding="utf-8"), end="")
    print(f"{len(index.pairs)} pair(s) reported in {args.run_dir}")
    return 0

def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        m_values = stages.parse_m_range(args.sweep_m)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    ctx = _context(args)
    frame = stages.run_sweep(ctx, m_values)
    print(frame.to_string(index=False))
    return 0

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windconflict",
        description="Probabilistic aircraft conflict detection under ensemble wind uncertainty",
    )
    parser.add_argument("--log-level", default=None, help=f"Logging level (default {settings.LOG_LEVEL})")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, help_text: str, handler):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("scenario", help="Scenario file")
        command.add_argument("--workers", type=int, default=None, help="Planning processes (overrides [run] workers)")
        command.set_defaults(handler=handler)
        return command

    scenario_command("ingest", "Pool ensemble files (or generate the synthetic one) into the run directory", cmd_ingest)
    scenario_command("decompose", "Build the muKL expansion and explained-variance table", cmd_decompose)
    surrogate = scenario_command("surrogate", "Plan at quadrature nodes and fit separation surrogates", cmd_surrogate)
    surrogate.add_argument("--dump", action="store_true", help="Print alpha_k(t) tables")
    surrogate.add_argument("--dump-every", type=int, default=1, help="Print every n-th time step")
    scenario_command("detect", "Conflict verdicts for every pair (builds missing stages)", cmd_detect)
    sweep = scenario_command("sweep", "Repeat detection for a range of truncation orders", cmd_sweep)
    sweep.add_argument("--sweep-M", dest="sweep_m", required=True, help="Inclusive range, e.g. 1..6")

    report = sub.add_parser("report", help="Summary and plot-ready CSVs from a detected run")
    report.add_argument("run_dir", help="Run directory")
    report.set_defaults(handler=cmd_report)
    return parser

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return ConfigError.exit_code
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

if __name__ == "__main__":
    sys.exit(main())
