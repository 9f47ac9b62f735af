"""Command-line interface.

Four subcommands share one configuration file format:

    harvseed check  --config run.ini        validate model assumptions
    harvseed solve  --config run.ini        solve and export the policy
    harvseed sweep  --config run.ini        solve a parameter family
    harvseed verify --config run.ini FILE   Monte Carlo check a solution

Exit codes: 0 success, 1 validation failure (bad config, failed
checks, mismatched inputs, verification disagreement), 2 runtime
failure (non-convergence, simulation blow-up).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import io
from .analysis import (
    classify_regions,
    extract_thresholds_1d,
    sweep,
    sweep_regime,
)
from .chain import build_grid
from .config import RunConfig, parse_config
from .errors import (
    AssumptionViolation,
    ConfigParseError,
    DimensionTooLarge,
    GridMismatch,
    HarvseedError,
    InvalidCoefficient,
    NonConstantPrice,
)
from .model import check_growth_condition, run_structure_checks
from .simulate import SimConfig, verify
from .solver import solve

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

_VALIDATION_ERRORS = (ConfigParseError, GridMismatch, AssumptionViolation,
                      InvalidCoefficient, DimensionTooLarge)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harvseed",
        description="Optimal harvesting and seeding policies for "
                    "stochastic population models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, metavar="PATH",
                       help="run configuration file")
        p.add_argument("--out", metavar="DIR",
                       help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, metavar="N",
                       help="override the simulation seed")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")

    p = sub.add_parser("check", help="validate the model assumptions")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="solve and export value and policy")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve over a parameter range")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="Monte Carlo check a solution file")
    p.add_argument("solution", metavar="SOLUTION_CSV",
                   help="solution file written by solve")
    common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def _say(args):
    def say(*parts):
        if not args.quiet:
            print(*parts)
    return say


def _outdir(args, config: RunConfig) -> str:
    path = args.out or config.outdir or "."
    os.makedirs(path, exist_ok=True)
    return path


def _grid(config: RunConfig):
    return build_grid(config.U, config.h, config.bounds.regime, config.model.d)


def cmd_check(args, config: RunConfig) -> int:
    say = _say(args)
    grid = _grid(config)
    reports = run_structure_checks(config.model, grid.nodes, grid.shape)
    try:
        reports.append(check_growth_condition(config.model, config.U))
    except NonConstantPrice:
        say("note: growth condition not checked (state-dependent price)")
    for report in reports:
        say(str(report))
    failed = [r for r in reports if not r.passed]
    if failed:
        for r in failed:
            print(f"check failed: {r.name}: {r.detail}", file=sys.stderr)
        return EXIT_INVALID
    say(f"all {len(reports)} checks passed")
    return EXIT_OK


def _print_policy_summary(say, solution):
    if solution.grid.d == 1:
        report = extract_thresholds_1d(solution)
        say(f"L1={report.L1:g} L2={report.L2:g}")
        for warning in report.contiguity_warnings:
            say(f"warning: {warning}")
        return
    labels = classify_regions(solution)
    values, counts = np.unique(labels, return_counts=True)
    say("policy regions: " + ", ".join(
        f"{v}={c}" for v, c in zip(values, counts)))


def cmd_solve(args, config: RunConfig) -> int:
    say = _say(args)
    grid = _grid(config)
    say(f"solving on {grid.n_nodes} nodes (h={grid.h:g}, extent={grid.extent:g})")
    solution = solve(config.model, config.bounds, grid, config.solver)

    outdir = _outdir(args, config)
    io.write_solution(os.path.join(outdir, "solution.csv"), solution)
    stats = {
        "iterations": solution.iterations,
        "converged": solution.converged,
        "bellman_residual": solution.bellman_residual,
        "min_increment": solution.min_increment,
        "wall_time": f"{solution.wall_time:.3f}",
    }
    io.write_manifest(os.path.join(outdir, "manifest.ini"),
                      config.materialized, stats)
    say(f"wrote {outdir}/solution.csv and {outdir}/manifest.ini")
    _print_policy_summary(say, solution)

    if not solution.converged:
        print(f"error: not converged after {solution.iterations} sweeps "
              f"(residual {solution.bellman_residual:.3g})", file=sys.stderr)
        return EXIT_RUNTIME
    say(f"converged in {solution.iterations} sweeps "
        f"({solution.wall_time:.1f}s)")
    return EXIT_OK


def cmd_sweep(args, config: RunConfig) -> int:
    say = _say(args)
    if config.sweep is None:
        print("error: config has no [sweep] section", file=sys.stderr)
        return EXIT_INVALID
    grid = build_grid(config.U, config.h,
                      sweep_regime(config.model, config.bounds, config.sweep),
                      config.model.d)
    result = sweep(config.model, config.bounds, grid, config.solver,
                   config.sweep)

    outdir = _outdir(args, config)
    io.write_sweep(os.path.join(outdir, "sweep.csv"), result)
    io.write_manifest(os.path.join(outdir, "manifest.ini"),
                      config.materialized, None)
    say(f"wrote {outdir}/sweep.csv")
    bad = 0
    for i, value in enumerate(result.values):
        report = result.reports[i]
        if report is not None:
            say(f"{result.parameter}={value:g}: "
                f"L1={report.L1:g} L2={report.L2:g}")
        if result.errors[i] is not None:
            bad += 1
            print(f"{result.parameter}={value:g}: {result.errors[i]}",
                  file=sys.stderr)
    if bad:
        print(f"error: {bad} of {len(result.values)} sweep points failed",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_verify(args, config: RunConfig) -> int:
    say = _say(args)
    solution = io.read_solution(args.solution)
    io.check_solution_matches(solution, config.model, config.bounds,
                              config.U, config.h)
    if not config.samples:
        print("error: no sample states configured "
              "(set samples under [simulate])", file=sys.stderr)
        return EXIT_INVALID
    sim_config = config.simulate or SimConfig()
    if args.seed is not None:
        sim_config = dataclasses.replace(sim_config, seed=args.seed)

    report = verify(solution, config.samples, sim_config,
                    slack_rel=config.slack_rel)
    outdir = _outdir(args, config)
    io.write_verify_report(os.path.join(outdir, "verify.csv"), report)
    say(f"wrote {outdir}/verify.csv")
    for state, solved, mean, stderr, diff, slack, ok in report.rows():
        coords = ", ".join(f"{c:g}" for c in state)
        say(f"x=({coords}): V={solved:.6f} mc={mean:.6f}±{stderr:.6f} "
            f"diff={diff:.6f} allowed={3.0 * stderr + slack:.6f} "
            f"{'pass' if ok else 'FAIL'}")
    if not report.all_passed:
        print("error: Monte Carlo estimate disagrees with the solved value",
              file=sys.stderr)
        return EXIT_INVALID
    say(f"all {len(report.states)} sample states agree")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
    except HarvseedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args, config)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except HarvseedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
