"""Command-line front end: ``ising-poisson <command> [flags]``.

Results go to stdout as csv/tsv tables (header row first; lines starting with
``#`` carry run metadata), diagnostics go to stderr.  Reals are printed with 17
significant digits; ``oor`` marks a value that is undefined because the row is
out of the theorem regime.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import asdict, fields
from typing import Iterable, Optional, Sequence

import numpy as np

from .asymptotics import check_hypotheses, reference_lattice, schedule_for_pattern
from .gibbs_exact import exact_joint_law
from .lattice import build_lattice, norm_label, parse_norm
from .patterns import LocalPattern, Potentials, load_pattern, pattern_report
from .sampler import INITS, ChainConfig, run_chain
from .stats import ConvergenceRow, batch_means_stderr, convergence_table, empirical_distribution

log = logging.getLogger("ising_poisson")

SENTINEL = "oor"


class UsageError(ValueError):
    pass


def cell(value) -> str:
    if value is None:
        return SENTINEL
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return SENTINEL
        return format(float(value), ".17g")
    return str(value)


class Table:
    def __init__(self, out, fmt: str):
        self.out = out
        self.writer = csv.writer(out, delimiter="," if fmt == "csv" else "\t", lineterminator="\n")

    def meta(self, key: str, value) -> None:
        self.out.write(f"# {key}={cell(value)}\n")

    def rows(self, header: Sequence[str], rows: Iterable[Sequence]) -> None:
        self.writer.writerow(header)
        for r in rows:
            self.writer.writerow([cell(v) for v in r])


def parse_grid(text: str) -> list[int]:
    """``start:stop:step`` (stop included when hit exactly) or a single integer."""
    parts = text.split(":")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"invalid n-grid {text!r}") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3 or nums[2] < 1 or nums[1] < nums[0]:
        raise UsageError(f"n-grid must be start:stop:step with step >= 1 and stop >= start, got {text!r}")
    start, stop, step = nums
    return list(range(start, stop + 1, step))


def _norm_arg(text: str):
    try:
        return parse_norm(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ising-poisson", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, lattice=True):
        p.add_argument("--file", required=True, help="pattern file")
        p.add_argument("--d", type=int, help="dimension (must match the pattern file)")
        p.add_argument("--p", type=_norm_arg, help="norm exponent, integer or 'inf'")
        p.add_argument("--rho", type=int, help="adjacency range")
        if lattice:
            p.add_argument("--n", type=int, help="torus side length")
        p.add_argument("--format", choices=("csv", "tsv"), default="csv")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    def potentials(p):
        p.add_argument("--a", type=float, required=True, help="single-site potential")
        p.add_argument("--b", type=float, required=True, help="pair potential (>= 0)")

    def schedule(p):
        p.add_argument("--lambda", dest="lam", type=float, required=True, help="target n^d W_n")
        p.add_argument("--schedule", choices=("example34", "fixed_b"), default="example34")
        p.add_argument("--b-fixed", type=float, help="b for the fixed_b schedule")
        p.add_argument("--n-grid", type=parse_grid, required=True, help="start:stop:step")

    def chain(p):
        p.add_argument("--sweeps", type=int, default=20_000)
        p.add_argument("--burn-in", type=int, default=None, help="default max(1000, 20n)")
        p.add_argument("--thin", type=int, default=1)
        p.add_argument("--chains", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--init", choices=INITS, default="all-minus")

    p = sub.add_parser("pattern", help="pattern statistics, gap and maximality probability")
    common(p)
    potentials(p)

    p = sub.add_parser("schedule", help="potential schedule and hypothesis diagnostics along a grid")
    common(p, lattice=False)
    schedule(p)

    p = sub.add_parser("exact", help="exact law of the occurrence count")
    common(p)
    potentials(p)
    p.add_argument("--upper", action="store_true", help="count positive-set occurrences instead")

    p = sub.add_parser("sample", help="empirical law of the occurrence count from heat-bath chains")
    common(p)
    potentials(p)
    chain(p)
    p.add_argument("--upper", action="store_true", help="count positive-set occurrences instead")

    p = sub.add_parser("converge", help="Poisson convergence table")
    common(p, lattice=False)
    schedule(p)
    p.add_argument("--engine", choices=("exact", "mcmc"), default="exact")
    chain(p)

    p = sub.add_parser("verify", help="self-verification suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    return parser


def _pattern(args) -> LocalPattern:
    try:
        pattern = load_pattern(args.file)
    except OSError as exc:
        raise UsageError(f"cannot read pattern file: {exc}") from None
    for flag, have in (("d", pattern.d), ("p", pattern.p), ("rho", pattern.rho)):
        given = getattr(args, flag, None)
        if given is not None and given != have:
            raise UsageError(f"--{flag} {norm_label(given) if flag == 'p' else given} disagrees with the pattern file ({have})")
    return pattern


def _lattice(args, pattern: LocalPattern):
    n = args.n if args.n is not None else reference_lattice(pattern).n
    lattice = build_lattice(n, pattern.d, pattern.p, pattern.rho)
    pattern.check_lattice(lattice)
    return lattice


def _schedule(args, pattern):
    if args.schedule == "fixed_b" and args.b_fixed is None:
        raise UsageError("--schedule fixed_b needs --b-fixed")
    if args.schedule != "fixed_b" and args.b_fixed is not None:
        raise UsageError("--b-fixed only applies to --schedule fixed_b")
    return schedule_for_pattern(pattern, args.schedule, args.lam, args.b_fixed)


def _chain_config(args) -> ChainConfig:
    return ChainConfig(args.sweeps, args.burn_in, args.thin, args.chains, args.seed, args.init)


def cmd_pattern(args, table: Table) -> int:
    pattern = _pattern(args)
    lattice = _lattice(args, pattern)
    rep = pattern_report(pattern, Potentials(args.a, args.b), lattice)
    ball = lattice.ball(0, pattern.radius)
    table.meta("n", lattice.n)
    table.rows(
        ("quantity", "value"),
        [
            ("k", rep.k),
            ("gamma", rep.gamma),
            ("beta", ball.beta),
            ("alpha", ball.alpha),
            ("V", lattice.V),
            ("log_weight", rep.log_weight),
            ("delta", rep.delta),
            ("theta", 0.0 if math.isnan(rep.theta) else rep.theta),  # no strict superset
            ("clean", rep.clean),
        ],
    )
    return 0


def cmd_schedule(args, table: Table) -> int:
    pattern = _pattern(args)
    sched = _schedule(args, pattern)
    report = check_hypotheses(sched, pattern, args.n_grid)
    table.meta("h1_trend", report.h1_trend)
    table.meta("homogeneous", report.homogeneous)
    names = [f.name for f in fields(report.rows[0])]
    table.rows(names, [[None if (k in ("delta", "theta", "M") and not r.in_regime) else v for k, v in asdict(r).items()] for r in report.rows])
    return 0


def cmd_exact(args, table: Table) -> int:
    pattern = _pattern(args)
    lattice = _lattice(args, pattern)
    pot = Potentials(args.a, args.b)
    law = exact_joint_law(lattice, pot, pattern, args.threads).marginal("upper" if args.upper else "exact")
    table.meta("count", "upper" if args.upper else "exact")
    table.meta("n", lattice.n)
    table.meta("log_Z", law.log_Z)
    table.meta("mean", law.mean)
    table.meta("variance", law.variance)
    table.rows(("count", "probability"), enumerate(law.pmf))
    return 0


def cmd_sample(args, table: Table) -> int:
    pattern = _pattern(args)
    lattice = _lattice(args, pattern)
    pot = Potentials(args.a, args.b)
    res = run_chain(lattice, pot, pattern, _chain_config(args), args.threads)
    series = res.upper if args.upper else res.x
    emp = empirical_distribution(series, res.config.chains)
    table.meta("count", "upper" if args.upper else "exact")
    table.meta("n", lattice.n)
    table.meta("burn_in", res.config.burn_in)
    table.meta("chains", res.config.chains)
    table.meta("samples", emp.samples)
    table.meta("mean", emp.mean)
    table.meta("mean_stderr", batch_means_stderr(series) if len(series) >= 50 else None)
    table.rows(("count", "probability", "stderr"), zip(range(len(emp.pmf)), emp.pmf, emp.stderr))
    return 0


def cmd_converge(args, table: Table) -> int:
    pattern = _pattern(args)
    sched = _schedule(args, pattern)
    config = _chain_config(args) if args.engine == "mcmc" else None
    rows = convergence_table(sched, pattern, args.n_grid, args.engine, config, args.threads)
    names = [f.name for f in fields(ConvergenceRow)]
    table.rows(names, [[getattr(r, k) for k in names] for r in rows])
    return 0


def cmd_verify(args, table: Table) -> int:
    from .verify import run_suite

    results = run_suite(args.level, args.threads, include_determinism=args.level == "full")
    for r in results:
        log.info("%s: %s in %.2fs", r.name, "pass" if r.passed else "FAIL", r.elapsed)
    table.rows(("check", "status", "detail"), [(r.name, "pass" if r.passed else "fail", r.detail) for r in results])
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "pattern": cmd_pattern,
    "schedule": cmd_schedule,
    "exact": cmd_exact,
    "sample": cmd_sample,
    "converge": cmd_converge,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not logging.getLogger().handlers:
        logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(levelname)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, Table(sys.stdout, args.format))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
