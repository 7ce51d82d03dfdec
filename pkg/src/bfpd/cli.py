"""Command-line front end: ``bfpd solve | audit | bench``.

Exit codes: 0 success, 1 a property failed, 2 the input did not parse or
validate, 3 the mechanism does not fit the instance's model or regime.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from pathlib import Path
from typing import Sequence

from gmpy2 import mpq

from . import harness
from .divisible import NonLinearValuation
from .klevel import (
    BadTheta,
    InvalidAlpha,
    InvalidAlphaBeta,
    RegimeMismatch,
    SortRejectConfig,
    large_market_alpha,
    largeness_upper_bound,
)
from .knapsack import TooLarge, brute_opt_integral, enum_cap, exact_opt_fractional_divisible, opt_f_klevel
from .mechanisms import MECHANISMS, ModelMismatch, Run, run_mechanism
from .model import (
    ZERO,
    Issue,
    KLevelInstance,
    Q,
    Regime,
    ValidationError,
    decimal12,
    fmt,
    instance_to_json,
    loads_instance,
    validate_divisible,
    validate_klevel,
)

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT, EXIT_MISMATCH = 0, 1, 2, 3

FAULTS = {"corrupt-q": lambda excess, v_star, v_rest: ZERO}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def instance_digest(inst) -> str:
    canon = json.dumps(instance_to_json(inst), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def _ratio(num, den):
    return None if den == 0 else num / den


def run_record(run: Run, theta=None) -> dict:
    """Flat summary of one mechanism run, with benchmark optima and ratios."""
    inst = run.instance
    out = run.outcome
    if isinstance(inst, KLevelInstance):
        opt_f = opt_f_klevel(inst)
        try:
            opt_i = brute_opt_integral(inst)
        except TooLarge:
            opt_i = None
    else:
        opt_f = exact_opt_fractional_divisible(inst)
        opt_i = None
    config = {} if run.config is None else run.config.describe()
    rec = {
        "instance_digest": instance_digest(inst),
        "mechanism": run.mechanism,
        "config": {k: fmt(v) for k, v in config.items()} | ({} if theta is None else {"theta": fmt(theta)}),
        "allocation": [fmt(q) for q in out.allocation.quantities],
        "payments": [fmt(p) for p in out.payments],
        "total_payment": fmt(out.total_payment),
        "value": fmt(out.value),
        "opt_f": fmt(opt_f),
        "opt_i": None if opt_i is None else fmt(opt_i),
        "ratio_f": None,
        "ratio_i": None,
        "diagnostics": out.to_json()["diagnostics"],
    }
    rf = _ratio(opt_f, out.value)
    rec["ratio_f"] = None if rf is None else fmt(rf)
    if opt_i is not None:
        ri = _ratio(opt_i, out.value)
        rec["ratio_i"] = None if ri is None else fmt(ri)
    return rec


# ---------------------------------------------------------------- solve


def cmd_solve(args) -> int:
    try:
        text = Path(args.instance).read_text(encoding="utf-8")
    except OSError as exc:
        return _input_error([Issue("Unreadable", None, str(exc))])
    try:
        inst = loads_instance(text)
        if isinstance(inst, KLevelInstance):
            validate_klevel(inst)
        else:
            validate_divisible(inst)
    except ValidationError as exc:
        return _input_error(exc.issues)
    try:
        alpha = None if args.alpha is None else Q(args.alpha)
        theta = None if args.theta is None else Q(args.theta)
    except (ValueError, TypeError) as exc:
        return _input_error([Issue("BadFlag", None, str(exc))])
    started = time.perf_counter()
    try:
        run = run_mechanism(args.mechanism, inst, alpha=alpha, theta=theta,
                            q_rule=FAULTS.get(args.fault))
    except (ModelMismatch, RegimeMismatch, NonLinearValuation) as exc:
        sys.stderr.write(_dump({"error": "mismatch", "message": str(exc)}))
        return EXIT_MISMATCH
    except (InvalidAlpha, InvalidAlphaBeta, BadTheta, ValueError) as exc:
        return _input_error([Issue("BadConfig", None, str(exc))])
    _emit(_dump(run_record(run, theta)), args.out)
    sys.stderr.write(f"wall time {time.perf_counter() - started:.3f}s\n")
    return EXIT_OK


def _input_error(issues: Sequence[Issue]) -> int:
    sys.stderr.write(_dump(ValidationError(issues).to_json()))
    return EXIT_INPUT


# ---------------------------------------------------------------- audit


def cmd_audit(args) -> int:
    if args.trials < 0 or args.n_max < 1 or args.k_max < 1:
        return _input_error([Issue("BadFlag", None, "trials >= 0, n-max >= 1, k-max >= 1 required")])
    rep = harness.run_audit(
        args.mechanism, args.trials, args.seed, args.n_max, args.k_max,
        grid=args.grid, truthfulness=not args.skip_truthfulness, q_rule=FAULTS.get(args.fault),
    )
    text = _dump(rep.to_json())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        sys.stdout.write(rep.summary_table() + "\n")
    else:
        sys.stdout.write(text)
        sys.stderr.write(rep.summary_table() + "\n")
    return EXIT_OK if rep.ok else EXIT_PROPERTY


# ---------------------------------------------------------------- bench

BENCH_COLUMNS = (
    "family", "n", "k", "theta", "theta_bound", "mechanism", "alpha",
    "value", "opt_f", "opt_i", "ratio", "ratio_i", "pay_over_budget",
)
LOSSY = ("theta_bound", "alpha", "value", "opt_f", "opt_i", "ratio", "ratio_i", "pay_over_budget")


def _csv_list(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def symmetric_instance(n: int) -> KLevelInstance:
    """n identical agents, one level each, budget for all but one."""
    return KLevelInstance.build([1] * n, [[1]] * n, n - 1, Regime.ALL_IN)


def _bench_row(family, inst: KLevelInstance, run: Run, theta=None, theta_bound=None) -> dict:
    opt_f = opt_f_klevel(inst)
    try:
        opt_i = brute_opt_integral(inst)
    except TooLarge:
        opt_i = None
    v = run.outcome.value
    row = {
        "family": family,
        "n": inst.n,
        "k": inst.k,
        "theta": theta,
        "theta_bound": theta_bound,
        "mechanism": run.mechanism,
        "alpha": run.config.alpha,
        "value": v,
        "opt_f": opt_f,
        "opt_i": opt_i,
        "ratio": _ratio(opt_f, v),
        "ratio_i": None if opt_i is None else _ratio(opt_i, v),
        "pay_over_budget": run.outcome.total_payment / inst.budget,
    }
    return row


def bench_rows(family: str, sizes: list[int], thetas: list[str], k: int, count: int, seed: int) -> list[dict]:
    rows = []
    if family == "symmetric":
        for n in sizes:
            inst = symmetric_instance(n)
            rows.append(_bench_row(family, inst, run_mechanism("sort-reject", inst)))
    elif family == "large-market":
        for t in thetas:
            theta = Q(t)
            cfg = SortRejectConfig(large_market_alpha(theta))
            for rep in range(count):
                inst = harness.gen_large_market(seed + rep, theta)
                run = run_mechanism("sort-reject", inst, cfg)
                rows.append(_bench_row(family, inst, run, theta, largeness_upper_bound(inst)))
    elif family == "random":
        for n in sizes:
            for rep in range(count):
                inst = harness.gen_klevel(seed + rep, n, k, Regime.ALL_IN)
                rows.append(_bench_row(family, inst, run_mechanism("sort-reject", inst)))
    else:
        raise ValueError(f"unknown family {family!r}")
    return rows


def render_csv(rows: list[dict]) -> str:
    header = list(BENCH_COLUMNS) + [f"{c}_dec12_lossy" for c in LOSSY]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        cells = []
        for c in BENCH_COLUMNS:
            val = row[c]
            cells.append("" if val is None else fmt(val) if isinstance(val, type(mpq(0))) else str(val))
        for c in LOSSY:
            val = row[c]
            cells.append("" if val is None else decimal12(val))
        w.writerow(cells)
    return buf.getvalue()


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in _csv_list(args.sizes)]
        thetas = _csv_list(args.thetas)
        for t in thetas:
            Q(t)
    except (ValueError, TypeError) as exc:
        return _input_error([Issue("BadFlag", None, str(exc))])
    if args.family == "symmetric" and any(n < 2 for n in sizes):
        return _input_error([Issue("BadFlag", None, "symmetric family needs n >= 2")])
    try:
        rows = bench_rows(args.family, sizes, thetas, args.k, args.count, args.seed)
    except (BadTheta, InvalidAlpha) as exc:
        return _input_error([Issue("BadFlag", None, str(exc))])
    _emit(render_csv(rows), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bfpd", description="Budget-feasible procurement mechanisms with exact payments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a mechanism on an instance file")
    s.add_argument("instance", help="instance JSON file")
    s.add_argument("--mechanism", "-m", choices=MECHANISMS, required=True)
    group = s.add_mutually_exclusive_group()
    group.add_argument("--alpha", help="rational alpha, e.g. 267949/1000000")
    group.add_argument("--theta", help="largeness bound; alpha is derived from it")
    s.add_argument("--out", help="write the JSON record here instead of stdout")
    s.add_argument("--fault", choices=sorted(FAULTS), help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("audit", help="run the exact property audit on generated instances")
    a.add_argument("--mechanism", "-m", choices=MECHANISMS, required=True)
    a.add_argument("--trials", type=int, default=100)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--n-max", type=int, default=5)
    a.add_argument("--k-max", type=int, default=4)
    a.add_argument("--grid", type=int, default=4, help="uniform deviation grid size")
    a.add_argument("--skip-truthfulness", action="store_true")
    a.add_argument("--out", help="write the JSON report here; the table goes to stdout")
    a.add_argument("--fault", choices=sorted(FAULTS), help=argparse.SUPPRESS)
    a.set_defaults(func=cmd_audit)

    b = sub.add_parser("bench", help="approximation ratios as CSV")
    b.add_argument("--family", choices=("symmetric", "large-market", "random"), required=True)
    b.add_argument("--sizes", default="", help="comma-separated agent counts")
    b.add_argument("--thetas", default="", help="comma-separated largeness targets (large-market)")
    b.add_argument("--k", type=int, default=2, help="levels per agent (random family)")
    b.add_argument("--count", type=int, default=3, help="instances per size or theta")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="CSV path; stdout when omitted")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TooLarge as exc:
        sys.stderr.write(_dump({"error": "too-large", "message": str(exc), "cap": enum_cap()}))
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
