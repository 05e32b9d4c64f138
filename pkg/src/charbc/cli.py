"""Command-line entry point: ``charbc {run,converge,bc-check,audit}``.

Exit codes: 0 success (including expected-fail negative controls, which set
``"expected_fail": true`` in the report), 2 config error, 3 solver
divergence, 4 unexpected audit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from charbc.config import ExperimentConfig, parse_config
from charbc.errors import CharBCError, ConfigError, DimensionError, DivergenceError, PositivityError
from charbc.harness import (
    EXIT_AUDIT,
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_OK,
    FAIL,
    audit_trace,
    bc_check,
    run_convergence,
    run_experiment,
)
from charbc.ibvp import EnergyTrace


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    config = parse_config(text)
    return config.with_overrides(out_dir=args.out_dir, seed=args.seed, tol=args.tol)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")


def _summary(report) -> dict:
    d = report.to_dict()
    return {
        "name": report.config["name"],
        "verdict": d["verdict"],
        "expected_fail": d["expected_fail"],
        "grids": [
            {
                "n_pts": g.n_pts,
                "trace_file": g.trace_file,
                "energy_identity": g.energy_identity["pass"],
                "bound": g.bound_verdict,
                "first_violation_t": g.bound["first_violation_t"],
                "max_ratio": g.bound["max_ratio"],
            }
            for g in report.grids
        ],
        "convergence": d["convergence"],
    }


def cmd_run(args: argparse.Namespace) -> int:
    report = run_experiment(_load_config(args))
    _emit(_summary(report))
    return report.exit_code


def cmd_converge(args: argparse.Namespace) -> int:
    report = run_convergence(_load_config(args))
    _emit(_summary(report))
    return report.exit_code


def cmd_bc_check(args: argparse.Namespace) -> int:
    try:
        with open(args.input) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read input: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    _emit(bc_check(data, tol=args.tol if args.tol is not None else 1.0e-12))
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    try:
        trace = EnergyTrace.from_csv(args.trace)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trace: {exc}") from None
    result = audit_trace(
        trace,
        tol=args.tol if args.tol is not None else 1.0e-9,
        bound_tol=args.bound_tol,
        expect=args.expect,
        violation_factor=args.violation_factor,
    )
    _emit(result)
    return EXIT_AUDIT if result["verdict"] == FAIL else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None, help="directory for traces and reports (overrides the config)")
    common.add_argument("--seed", type=int, default=None, help="recorded seed (overrides the config)")
    common.add_argument("--tol", type=float, default=None, help="energy-identity / certificate tolerance")
    common.add_argument("-v", "--verbose", action="store_true", help="log solver warnings")

    parser = argparse.ArgumentParser(prog="charbc", description="Audit open boundary conditions for hyperbolic IBVPs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run an experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", parents=[common], help="grid-refinement study of a config with an exact solution")
    p.add_argument("config")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("bc-check", parents=[common], help="R/S admissibility certificates for {A, normal, R, S}")
    p.add_argument("input")
    p.set_defaults(func=cmd_bc_check)

    p = sub.add_parser("audit", parents=[common], help="re-derive verdicts from a trace CSV")
    p.add_argument("trace")
    p.add_argument("--bound-tol", type=float, default=1.0e-7)
    p.add_argument("--expect", choices=("bounded", "violation"), default="bounded")
    p.add_argument("--violation-factor", type=float, default=1.0)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, PositivityError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except CharBCError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
