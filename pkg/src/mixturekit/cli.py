"""Command-line front end.

Every subcommand accepts ``--config FILE``, a JSON object whose keys are the
subcommand's long option names (dashes or underscores).  Unknown keys are
rejected and explicit flags override values from the file.

Exit status: 0 on success, 1 on usage or input errors, 2 on numerical or
convergence failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from . import __version__
from .asymcrit import DEFAULT_LEVELS, CritSimConfig, critical_values
from .exceptions import (
    ConvergenceError,
    EmptySupportError,
    InfeasibleProblemError,
    InvalidArgumentError,
    MixtureKitError,
    NumericDomainError,
    ReplicationError,
)
from .experiments import POWER_TESTS, PowerConfig, SizeConfig, power_experiment, size_experiment
from .homogeneity import calpha_test, kw_lrt, ks_test, parametric_lrt
from .model import bin_sample, build_grid, likelihood_matrix, read_sample
from .montecarlo import THREADS_ENV
from .npmle import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_npmle
from . import report

log = logging.getLogger("mixturekit")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
_NUMERIC_ERRORS = (ConvergenceError, NumericDomainError, InfeasibleProblemError,
                   EmptySupportError, ReplicationError)
_DOMAINS = [[-1.0, 1.0], [-2.0, 2.0], [-3.0, 3.0], [-4.0, 4.0]]
_LRT_TESTS = ("kw", "chen", "uniform", "gauss_scale")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p, *, seeded=False):
    p.add_argument("--config", metavar="FILE", help="JSON file with option values; flags take precedence")
    p.add_argument("--out", default="-", metavar="PATH", help="output file ('-' for standard output)")
    if seeded:
        p.add_argument("--seed", type=int, default=42, help="master seed")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default: ${THREADS_ENV} or the CPU count)")


def _add_data(p):
    p.add_argument("--data", required=True, metavar="FILE", help="one observation per line, optional 'x' header")
    p.add_argument("--bins", type=int, default=None, help="bin the data into this many equal bins first")


def _add_grid(p):
    p.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "SPACING"), default=None,
                   help="parameter grid; default: 300 points spanning the data")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="mixturekit", description="Homogeneity tests for Gaussian location mixtures.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("npmle", help="fit the gridded NPMLE of the mixing distribution", formatter_class=fmt)
    _add_data(p)
    _add_grid(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="duality-gap tolerance")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, help="cap on Newton-type steps")
    _add_common(p)

    p = sub.add_parser("lrt", help="likelihood ratio tests of homogeneity", formatter_class=fmt)
    _add_data(p)
    _add_grid(p)
    p.add_argument("--test", nargs="+", choices=_LRT_TESTS, default=["kw"], help="tests to run")
    p.add_argument("--lam", type=float, default=None, help="mixing weight of the chen family")
    p.add_argument("--h-max", type=float, default=10.0, help="search bound for the parametric h")
    p.add_argument("--critical-value", type=float, default=math.nan,
                   help="reject above this value (NaN: report the statistic only)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="NPMLE duality-gap tolerance")
    _add_common(p)

    p = sub.add_parser("calpha", help="C(alpha) and Kolmogorov-Smirnov tests", formatter_class=fmt)
    _add_data(p)
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level")
    p.add_argument("--critical-value", type=float, default=None,
                   help="override the chi-bar critical value")
    p.add_argument("--ks-critical-value", type=float, default=math.nan,
                   help="critical value for the KS statistic (NaN: report only)")
    _add_common(p)

    p = sub.add_parser("critvals", help="simulate asymptotic critical values of the KW-LRT", formatter_class=fmt)
    p.add_argument("--domain", type=float, nargs=2, action="append", metavar=("LO", "HI"),
                   help=f"mixing domain, repeatable (default: {_DOMAINS})")
    p.add_argument("--grid-points", type=int, default=200, help="grid points per domain (zero excluded)")
    p.add_argument("--cutoff", type=int, default=25, help="moment truncation K")
    p.add_argument("--reps", type=int, default=10000, help="Monte Carlo replications")
    p.add_argument("--levels", type=float, nargs="+", default=list(DEFAULT_LEVELS), help="quantile levels")
    p.add_argument("--closed-form", action="store_true", help="use the untruncated exp(z)-1-z moment matrix")
    _add_common(p, seeded=True)

    p = sub.add_parser("size-exp", help="empirical null quantiles of the KW-LRT", formatter_class=fmt)
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 500, 1000, 5000, 10000], help="sample sizes")
    p.add_argument("--domain", type=float, nargs=2, action="append", metavar=("LO", "HI"),
                   help=f"mixing domain, repeatable (default: {_DOMAINS})")
    p.add_argument("--spacing", type=float, default=0.01, help="grid spacing")
    p.add_argument("--reps", type=int, default=10000, help="Monte Carlo replications")
    p.add_argument("--levels", type=float, nargs="+", default=[0.90, 0.95, 0.99], help="quantile levels")
    p.add_argument("--binning", type=json.loads, default=None, metavar="JSON",
                   help='bins per sample size, e.g. \'{"1000": 300}\' (default: raw below 1000, '
                        '300 bins below 10000, 500 above)')
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="NPMLE duality-gap tolerance")
    _add_common(p, seeded=True)

    p = sub.add_parser("power-exp", help="size-adjusted power curves", formatter_class=fmt)
    p.add_argument("--family", choices=("chen", "uniform", "gauss"), default="chen", help="alternative")
    p.add_argument("--lam", type=float, default=1.0 / 3.0, help="chen mixing weight")
    p.add_argument("--h-grid", type=float, nargs="+", default=None,
                   help="alternatives h (default: 21 points, [0,0.6] or [0,0.15] for chen, [0,1] otherwise)")
    p.add_argument("--n", type=int, default=200, help="sample size")
    p.add_argument("--reps", type=int, default=10000, help="replications per h")
    p.add_argument("--tests", nargs="+", choices=POWER_TESTS, default=list(POWER_TESTS), help="tests")
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level")
    p.add_argument("--calibration-reps", type=int, default=None, help="null replications (default: --reps)")
    p.add_argument("--kw-grid-points", type=int, default=300, help="KW grid size over the data range")
    p.add_argument("--h-max", type=float, default=10.0, help="search bound for the parametric h")
    p.add_argument("--critical-values", type=json.loads, default=None, metavar="JSON",
                   help="fixed critical values per test, skipping calibration for those tests")
    p.add_argument("--plot", default=None, metavar="SVG", help="also draw the power curves to this file")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="NPMLE duality-gap tolerance")
    _add_common(p, seeded=True)
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _apply_config(parser, argv):
    """Parse ``argv``, letting a ``--config`` file supply defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: expected a JSON object")
    sub = _subparser(parser, args.command)
    known = {a.dest for a in sub._actions} - {"help", "config"}
    values = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
        values[dest] = value
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def _load(args):
    try:
        sample = read_sample(args.data)
    except FileNotFoundError:
        raise UsageError(f"data file not found: {args.data}") from None
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None
    return bin_sample(sample, args.bins) if args.bins else sample


def _grid(args, sample):
    if args.grid is None:
        x = sample.support
        return build_grid(float(x.min()), float(x.max()), count=300)
    lo, hi, spacing = args.grid
    return build_grid(lo, hi, spacing=spacing)


def _cmd_npmle(args):
    sample = _load(args)
    fit = solve_npmle(likelihood_matrix(sample, _grid(args, sample)), tol=args.tol, max_iter=args.max_iter)
    report.write_fit_json(fit, args.out)
    if not fit.converged:
        log.error("NPMLE did not reach the gap tolerance: gap %.3g > %g", fit.gap, args.tol)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_lrt(args):
    sample = _load(args)
    results = []
    for test in args.test:
        if test == "kw":
            res = kw_lrt(sample, _grid(args, sample), tol=args.tol, critical_value=args.critical_value)
        else:
            res = parametric_lrt(sample, test, h_max=args.h_max, lam=args.lam,
                                 critical_value=args.critical_value)
        results.append(res)
    report.write_results_csv(results, sample.total_count, args.out)
    if any(r.diagnostics.get("converged") is False for r in results):
        log.error("NPMLE did not reach the gap tolerance")
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_calpha(args):
    sample = _load(args)
    results = [calpha_test(sample, args.alpha, args.critical_value)]
    if sample.is_raw:
        results.append(ks_test(sample, args.ks_critical_value))
    report.write_results_csv(results, sample.total_count, args.out)
    return EXIT_OK


def _cmd_critvals(args):
    cfg = CritSimConfig(domains=tuple(map(tuple, args.domain or _DOMAINS)), grid_points=args.grid_points,
                        cutoff=args.cutoff, reps=args.reps, seed=args.seed, levels=tuple(args.levels),
                        closed_form=args.closed_form)
    report.write_crit_csv(critical_values(cfg, workers=args.workers), args.out)
    return EXIT_OK


def _cmd_size(args):
    cfg = SizeConfig(sizes=tuple(args.sizes), domains=tuple(map(tuple, args.domain or _DOMAINS)),
                     spacing=args.spacing, reps=args.reps, seed=args.seed, levels=tuple(args.levels),
                     binning=args.binning, tol=args.tol)
    report.write_size_csv(size_experiment(cfg, workers=args.workers), args.out)
    return EXIT_OK


def _cmd_power(args):
    cfg = PowerConfig(family=args.family, lam=args.lam, h_grid=args.h_grid, n=args.n, reps=args.reps,
                      tests=tuple(args.tests), seed=args.seed, alpha=args.alpha,
                      calibration_reps=args.calibration_reps, kw_grid_points=args.kw_grid_points,
                      h_max=args.h_max, tol=args.tol, critical_values=args.critical_values)
    table = power_experiment(cfg, workers=args.workers)
    report.write_power_csv(table, args.out)
    if args.plot:
        report.emit_svg_power_plot(table, args.plot)
    if table.nonconverged:
        log.warning("%d KW fits stopped short of the gap tolerance", table.nonconverged)
    return EXIT_OK


_COMMANDS = {
    "npmle": _cmd_npmle,
    "lrt": _cmd_lrt,
    "calpha": _cmd_calpha,
    "critvals": _cmd_critvals,
    "size-exp": _cmd_size,
    "power-exp": _cmd_power,
}


def run(argv=None) -> int:
    """Execute one command line and return its exit status."""
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MixtureKitError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
