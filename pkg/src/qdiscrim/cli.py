"""Command-line entry point: ``qdiscrim {fig1,fig2,fig3,traj,validate}``.

Exit codes: 0 success, 2 validation failure, 3 numeric error, 4 bad arguments.
"""

from __future__ import annotations

import argparse
import logging
import math
import re
import sys

from .experiments import COMMANDS, ExperimentSpec, write_result
from .information import NumericError
from .trajectory import StepError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_ARGS = 4

_FRACTION = re.compile(r"^\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


class UsageError(Exception):
    pass


def parse_theta(text: str) -> float:
    """Accepts plain radians ('0.39') or pi fractions ('pi/8', '3pi/8', '3*pi/8')."""
    m = _FRACTION.match(text.lower())
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        if den == 0:
            raise argparse.ArgumentTypeError(f"bad angle {text!r}")
        val = num * math.pi / den
    else:
        try:
            val = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad angle {text!r}") from None
    if not (0.0 <= val <= math.pi / 2 + 1e-15):
        raise argparse.ArgumentTypeError(f"angle {text!r} outside [0, pi/2]")
    return min(val, math.pi / 2)


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v

    return conv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qdiscrim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "fig1": "mutual information vs measurement time, no feedback",
        "fig2": "mutual information with and without feedback",
        "fig3": "percentage rate increase vs preparation time",
        "traj": "dump simulated trajectories",
        "validate": "run the oracle suites",
    }
    for name, h in helps.items():
        s = sub.add_parser(name, help=h)
        s.add_argument("--theta", action="append", type=parse_theta, help="repeatable; radians or e.g. pi/8")
        s.add_argument("--gamma", type=_positive(float), default=1.0)
        s.add_argument("--dt", type=_positive(float), default=1e-4)
        s.add_argument("--t-max", type=_positive(float))
        s.add_argument("--t-points", type=_positive(int), default=101)
        s.add_argument("--n-traj", type=_positive(int))
        s.add_argument("--seed", type=int, default=12345)
        s.add_argument("--t-prep-min", type=_positive(float), default=0.01)
        s.add_argument("--t-prep-max", type=_positive(float), default=10.0)
        s.add_argument("--t-prep-points", type=_positive(int), default=61)
        s.add_argument("--feedback", choices=("on", "off", "both"), default="off")
        s.add_argument("--out", default="results")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        s.add_argument("--emit-plot", action="store_true")
        s.add_argument("--dump", type=int, default=10, help="trajectories written individually (traj)")
        s.add_argument("--bits", action="store_true", help="also print final information values in bits (files stay in nats)")
        s.add_argument("--debug-sigma-z-exponent", action="store_true", help=argparse.SUPPRESS)
    return p


def spec_from_args(args) -> ExperimentSpec:
    if args.t_prep_min >= args.t_prep_max:
        raise UsageError("--t-prep-min must be below --t-prep-max")
    if args.t_points < 2:
        raise UsageError("--t-points must be at least 2")
    if args.gamma * args.dt > 1e-2:
        raise UsageError("gamma * dt must be at most 1e-2")
    return ExperimentSpec(
        command=args.command,
        thetas=tuple(args.theta or ()),
        gamma=args.gamma,
        dt=args.dt,
        t_max=args.t_max,
        t_points=args.t_points,
        n_traj=args.n_traj,
        seed=args.seed,
        t_prep_min=args.t_prep_min,
        t_prep_max=args.t_prep_max,
        t_prep_points=args.t_prep_points,
        feedback=args.feedback,
        out=args.out,
        format=args.format,
        emit_plot=args.emit_plot,
        dump=args.dump,
        debug_sigma_z_exponent=args.debug_sigma_z_exponent,
    )


def bits_summary(result) -> list[str]:
    """Last-grid-point information per theta, in nats and bits (display only)."""
    names = {"fig1": ("M_quadrature", "M_opt"), "fig2": ("M_nofb", "M_fb", "M_opt")}.get(result.spec.command)
    if names is None:
        return []
    table = result.tables[0]
    cols = [table.columns.index(n) for n in names]
    last = {}
    for row in table.rows:
        last[row[0]] = row
    lines = []
    for theta, row in last.items():
        parts = [f"{n}={row[c]:.6f} nats ({row[c] / math.log(2):.6f} bits)" for n, c in zip(names, cols)]
        lines.append(f"theta={theta:.6g} gamma_t={row[1]:.6g}: " + ", ".join(parts))
    return lines


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = spec_from_args(args)
    except UsageError as exc:
        print(f"qdiscrim: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    try:
        result = COMMANDS[spec.command](spec)
    except (NumericError, StepError, FloatingPointError, ArithmeticError) as exc:
        print(f"qdiscrim: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"qdiscrim: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    for path in write_result(result):
        print(path)
    if args.bits:
        for line in bits_summary(result):
            print(line)
    for name, check in result.checks.items():
        print(f"{'PASS' if check['passed'] else 'FAIL'} {name}")
    return EXIT_OK if result.passed else EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
