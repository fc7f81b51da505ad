"""Command-line driver for convergence studies.

Example::

    stokes-eq --problem smooth_square --pair sv --estimator geq --nu 1 \\
              --levels 5 --uniform --out history.csv

Writes the CSV table to ``--out`` (or standard output) and reports the
final efficiency index.  Exit codes: 0 success, 2 invalid arguments,
3 solver or estimator failure.
"""

from __future__ import annotations

import argparse
import math
import sys

from .amr import AmrError, amr_loop
from .estimate import EstimatorConfig
from .problems import PROBLEMS, ManufacturedSolutionError, check_manufactured, get_problem
from .stokes import PAIRS

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
DEFAULT_MESH_N = {"smooth_square": 4, "lshape": 2}


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {text}")
    return v


def build_parser():
    p = argparse.ArgumentParser(
        prog="stokes-eq",
        description="Uniform or adaptive Stokes studies with equilibrated error bounds.")
    p.add_argument("--problem", choices=sorted(PROBLEMS), default="smooth_square")
    p.add_argument("--pair", type=str.lower, choices=[k.lower() for k in PAIRS], default="sv")
    p.add_argument("--estimator", type=str.lower, choices=["ceq", "geq", "leq"], default="geq")
    p.add_argument("--nu", type=_positive_float, default=1.0, help="viscosity")
    p.add_argument("--levels", type=_positive_int, default=5, help="number of solves")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--uniform", dest="uniform", action="store_true", default=True,
                      help="refine all elements (default)")
    mode.add_argument("--adaptive", dest="uniform", action="store_false",
                      help="refine elements marked by the estimator")
    p.add_argument("--c0", type=_positive_float, default=0.3, help="inf-sup constant")
    p.add_argument("--c1", type=_positive_float, default=1.0, help="interpolation constant")
    p.add_argument("--c2", type=_positive_float, default=1.0, help="interpolation constant")
    p.add_argument("--max-ndof", type=_positive_int, default=200_000)
    p.add_argument("--out", type=str, default=None, help="CSV path (default: standard output)")
    p.add_argument("--mesh-n", type=_positive_int, default=None,
                   help="initial mesh density (default 4 on the square, 2 on the L-shape)")
    p.add_argument("--seed", type=int, default=0, help="reserved; runs are deterministic")
    return p


def run_study(args):
    """Run the study described by parsed arguments; returns the history."""
    problem = get_problem(args.problem, args.nu)
    check_manufactured(problem)
    config = EstimatorConfig(c0=args.c0, c1=args.c1, c2=args.c2)
    mesh_n = args.mesh_n or DEFAULT_MESH_N[args.problem]
    out = None
    if args.out is not None:
        out = open(args.out, "w", newline="")
    try:
        history = amr_loop(problem, args.pair.upper(), args.estimator.upper(), config,
                           max_levels=args.levels, max_ndof=args.max_ndof,
                           uniform=args.uniform, mesh_n=mesh_n)
        history.write_csv(out if out is not None else sys.stdout)
    finally:
        if out is not None:
            out.close()
    return history


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        history = run_study(args)
    except OSError as exc:
        print(f"stokes-eq: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AmrError, ManufacturedSolutionError) as exc:
        print(f"stokes-eq: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    report = sys.stderr if args.out is None else sys.stdout
    if len(history):
        print(f"final efficiency index: {history[-1].efficiency:.6g}", file=report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
