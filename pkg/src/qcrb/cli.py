"""``qcrb`` command line: eval, scan, reproduce and audit.

Exit codes: 0 success (audit: every biased bound holds), 1 audit found a
biased-bound violation, 2 usage, domain or model-spec error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from .api import BoundAuditor, QFIProfiler
from .estimation import ESTIMATORS, monte_carlo_stats
from .expr import ExprError
from .models import ModelSpecError, resolve_model
from .qfi import DEFAULT_FD_EPS

log = logging.getLogger("qcrb")

DEFAULT_N = (10, 100, 1000)
SCAN_STEPS = 101
REPRODUCE_STEPS = 201
MC_DRAWS = 20_000
MC_SIGMAS = 5.0

SCAN_COLUMNS = ("theta", "rank", "f1_q", "f2", "f3", "delta", "sld_sup", "sld_bounded", "f3_divergent")


class UsageError(Exception):
    pass


# -- formatting ----------------------------------------------------------------------


def fmt_csv(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return format(x, ".17g")


def fmt_json(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if value is None:
        return None
    x = float(value)
    # non-finite values become null; the divergence flags carry the meaning
    return x if math.isfinite(x) else None


def render(columns, rows, fmt):
    if fmt == "json":
        objs = [{c: fmt_json(v) for c, v in zip(columns, row)} for row in rows]
        return json.dumps(objs, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt_csv(v) for v in row])
    return buf.getvalue()


def emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# -- argument handling ---------------------------------------------------------------


def positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (x > 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {text!r}")
    return x


def finite_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
    return x


def n_list(text):
    try:
        ns = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--n expects a comma list of integers, got {text!r}") from None
    if not ns or min(ns) < 1:
        raise argparse.ArgumentTypeError(f"--n values must be positive integers, got {text!r}")
    return ns


def seed_u64(text):
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text!r}")
    return s


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="trig", help="built-in name (flip, trig) or path to a model-spec JSON")
    common.add_argument("--rank-tol", type=positive_float, default=None)
    common.add_argument("--fd-eps", type=positive_float, default=DEFAULT_FD_EPS)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--from", dest="start", type=finite_float, default=None, help="grid start (default domain min)")
    grid.add_argument("--to", dest="stop", type=finite_float, default=None, help="grid end (default domain max)")
    grid.add_argument("--steps", type=int, default=None)

    samples = argparse.ArgumentParser(add_help=False)
    samples.add_argument("--n", type=n_list, default=list(DEFAULT_N), help="comma list of sample counts")
    samples.add_argument("--estimator", choices=sorted(ESTIMATORS), default=None)
    samples.add_argument("--mc-check", action="store_true", help="cross-check exact sums by sampling (stderr only)")
    samples.add_argument("--seed", type=seed_u64, default=0)

    parser = argparse.ArgumentParser(prog="qcrb", description="Quantum Fisher information and QCRB audits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="QFI report at one parameter value")
    p.add_argument("--theta", type=finite_float, required=True)

    sub.add_parser("scan", parents=[common, grid], help="QFI table over a grid")

    p = sub.add_parser("reproduce", parents=[common, grid, samples], help="tables behind the bias and variance figures")
    p.add_argument("figure", choices=("fig1", "fig2"))

    p = sub.add_parser("audit", parents=[common, grid, samples], help="estimator error vs bounds")
    p.add_argument("--ych-eps", type=positive_float, default=None)
    p.add_argument("--purification-thetap", type=finite_float, default=None)
    return parser


def make_grid(args, model, default_steps):
    lo, hi = model.domain
    start = lo if args.start is None else args.start
    stop = hi if args.stop is None else args.stop
    steps = default_steps if args.steps is None else args.steps
    if steps < 2:
        raise UsageError(f"--steps must be at least 2, got {steps}")
    if not start < stop:
        raise UsageError(f"--from must be below --to, got {start!r} >= {stop!r}")
    for t in (start, stop):
        model.check_theta(t)
    grid = np.linspace(start, stop, steps)
    grid[-1] = stop
    return grid


# -- commands ------------------------------------------------------------------------


def _report_items(r):
    return [
        ("theta", r.theta),
        ("rank", r.rank),
        ("is_singular", r.is_singular),
        ("f1_q", r.f1_q),
        ("f2", r.f2),
        ("f3", r.f3),
        ("f3_symmetric", r.f3_symmetric),
        ("delta", r.delta),
        ("sld_sup", r.sld_sup_element),
        ("sld_bounded", r.sld_bounded_verdict),
        ("f3_divergent", r.f3_divergent),
        ("q_divergent", r.q_divergent),
        ("q_construction", r.q_construction),
        ("drho_source", r.drho_source),
        ("eigencurve_source", r.eigencurve_source),
    ]


def _short(value):
    if isinstance(value, str):
        return value
    if isinstance(value, float) and math.isfinite(value) and value != 0:
        return format(value, ".12g")
    return fmt_csv(value)


def cmd_eval(args):
    profiler = QFIProfiler(args.model, args.rank_tol, args.fd_eps).fit()
    (report,) = profiler.reports([args.theta])
    items = _report_items(report)
    if args.format == "json":
        text = json.dumps({k: v if isinstance(v, str) else fmt_json(v) for k, v in items}, indent=1) + "\n"
    else:
        text = "".join(f"{k}={_short(v)}\n" for k, v in items)
    for w in report.warnings:
        log.warning(w)
    emit(text, args.out)
    return 0


def cmd_scan(args):
    profiler = QFIProfiler(args.model, args.rank_tol, args.fd_eps).fit()
    grid = make_grid(args, profiler.model_, SCAN_STEPS)
    rows = [
        (r.theta, r.rank, r.f1_q, r.f2, r.f3, r.delta, r.sld_sup_element, r.sld_bounded_verdict, r.f3_divergent)
        for r in profiler.reports(grid)
    ]
    emit(render(SCAN_COLUMNS, rows, args.format), args.out)
    return 0


def _audit(args, **extra):
    model = resolve_model(args.model)
    grid = make_grid(args, model, REPRODUCE_STEPS if args.command == "reproduce" else SCAN_STEPS)
    auditor = BoundAuditor(
        model=model,
        estimator=args.estimator,
        n_samples=tuple(args.n),
        rank_tol=args.rank_tol,
        fd_eps=args.fd_eps,
        **extra,
    ).fit(grid)
    if args.mc_check:
        mc_check(auditor, args.seed)
    return grid, auditor


def mc_check(auditor, seed):
    """Compare exact means with sampled ones; report on stderr, never on stdout."""
    worst = 0.0
    for i, r in enumerate(auditor.records_):
        mean, _ = monte_carlo_stats(auditor.estimator_, r.n, r.theta, MC_DRAWS, seed + i)
        # floor keeps a zero-variance point from turning summation ulps into failures
        se = max(math.sqrt(r.variance / MC_DRAWS), 1e-12 * max(1.0, abs(r.mean)))
        worst = max(worst, abs(mean - r.mean) / se)
    status = "ok" if worst <= MC_SIGMAS else "MISMATCH"
    print(f"mc-check: {status} max deviation {worst:.2f} standard errors over {len(auditor.records_)} points", file=sys.stderr)


def _by_n(records):
    table = {}
    for r in records:
        table.setdefault(r.n, []).append(r)
    return table


def cmd_reproduce(args):
    grid, auditor = _audit(args)
    by_n = _by_n(auditor.records_)
    ns = list(by_n)
    if args.figure == "fig1":
        columns = ["theta"] + [f"bias_{n}" for n in ns]
        rows = [[t] + [by_n[n][i].bias for n in ns] for i, t in enumerate(grid)]
    else:
        columns = ["theta"]
        for n in ns:
            columns += [f"nvar_{n}", f"biased_bound_{n}"]
        columns.append("unbiased_bound")
        rows = []
        for i, t in enumerate(grid):
            row = [t]
            for n in ns:
                r = by_n[n][i]
                row += [r.nvar, n * r.biased_bound]
            F = by_n[ns[0]][i].qfi
            row.append(0.0 if math.isinf(F) else 1.0 / F)
            rows.append(row)
    emit(render(columns, rows, args.format), args.out)
    return 0


AUDIT_COLUMNS = (
    "theta",
    "n",
    "mean",
    "bias",
    "mse",
    "variance",
    "nvar",
    "dmean",
    "qfi",
    "unbiased_bound",
    "biased_bound",
    "f2_bound",
    "violated_unbiased",
    "holds_biased",
    "violated_f2",
)


def cmd_audit(args):
    _, auditor = _audit(args, ych_eps=args.ych_eps, purification_thetap=args.purification_thetap)
    columns = list(AUDIT_COLUMNS)
    if args.ych_eps is not None:
        columns += ["ych_lhs", "ych_rhs", "ych_holds"]
    if args.purification_thetap is not None:
        columns += ["purification_bound", "purification_holds"]
    rows = [[getattr(r, c) for c in columns] for r in auditor.records_]
    emit(render(columns, rows, args.format), args.out)
    nu, nb = auditor.n_unbiased_violations_, auditor.n_biased_violations_
    summary = f"unbiased-violations={nu} biased-violations={nb}"
    if args.ych_eps is not None:
        summary += f" ych-violations={sum(not r.ych_holds for r in auditor.records_)}"
    if args.purification_thetap is not None:
        summary += f" purification-violations={sum(not r.purification_holds for r in auditor.records_)}"
    print(summary, file=sys.stderr)
    return 1 if nb else 0


COMMANDS = {"eval": cmd_eval, "scan": cmd_scan, "reproduce": cmd_reproduce, "audit": cmd_audit}


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("QCRB_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ModelSpecError, ExprError, OSError, ValueError) as exc:
        print(f"qcrb {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
