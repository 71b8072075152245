"""Command-line interface: inference, equivalence, synthesis, queries.

Exit codes: 0 success, 1 usage or parse error, 2 unsupported program
fragment, 3 invariant or equivalence rejected, 4 undefined conditioned
semantics, 5 synthesis unsolved.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction

from . import equiv, gf, lang, oracle, query, semantics, synth
from .errors import (
    DegenerateConditioning,
    DivisorUnsupported,
    FragmentError,
    InvariantRejected,
    NonRationalClosedForm,
    ParseError,
    PgfkitError,
    UndefinedNormalization,
    UnsupportedAssignment,
    UnsupportedGuard,
)
from .gf import EFps, pvar
from .symexpr import PROGRAM, SymExpr, series_expand, to_string

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FRAGMENT = 2
EXIT_REJECTED = 3
EXIT_UNDEFINED = 4
EXIT_UNSOLVED = 5

ORDER_ENV = "PGFKIT_SERIES_ORDER"
DEFAULT_ORDER = 10

_FRAGMENT_ERRORS = (FragmentError, UnsupportedGuard, UnsupportedAssignment,
                    NonRationalClosedForm, DivisorUnsupported)


def _default_order():
    try:
        return int(os.environ.get(ORDER_ENV, DEFAULT_ORDER))
    except ValueError:
        return DEFAULT_ORDER


def build_parser():
    ap = argparse.ArgumentParser(
        prog="pgfkit",
        description="Exact inference for discrete probabilistic programs "
                    "with conditioning, via generating functions.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true",
                       help="machine-readable JSON output")
        p.add_argument("--order", type=int, default=_default_order(),
                       help="series display order (env %s)" % ORDER_ENV)

    def strategy(p):
        p.add_argument("--prior", default="1",
                       help="prior generating function expression")
        p.add_argument("--unroll", type=int, default=semantics.DEFAULT_UNROLL,
                       help="max loop unrollings")
        p.add_argument("--invariant", metavar="FILE",
                       help="loop-free invariant program for while loops")
        p.add_argument("--assert-uast", action="store_true",
                       help="assert almost-sure termination of the loop")

    p = sub.add_parser("infer", help="posterior distribution of a program")
    p.add_argument("program")
    strategy(p)
    p.add_argument("--query", action="append", default=[],
                   help="e.g. E[t], Var[t], M[t,2], FM[t,2], P[t=0], Tail[t,100]")
    p.add_argument("--unconditioned", action="store_true",
                   help="skip normalization")
    p.add_argument("--csv", metavar="FILE", help="write the series table as CSV")
    p.add_argument("--plot", metavar="FILE",
                   help="render the series table as a bar chart image")
    common(p)

    p = sub.add_parser("check-equiv", help="equivalence of two loop-free programs")
    p.add_argument("left")
    p.add_argument("right")
    common(p)

    p = sub.add_parser("check-invariant",
                       help="check a loop-free invariant against a loop")
    p.add_argument("program", help="program whose first while loop is checked")
    p.add_argument("--invariant", metavar="FILE", required=True)
    common(p)

    p = sub.add_parser("synthesize",
                       help="solve for template parameters making an invariant")
    p.add_argument("program", help="program whose first while loop is used")
    p.add_argument("--template", metavar="FILE", required=True)
    common(p)

    p = sub.add_parser("mc-check",
                       help="cross-validate exact results by sampling")
    p.add_argument("program")
    strategy(p)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--top", type=int, default=20,
                   help="number of states to compare")
    p.add_argument("--csv", metavar="FILE", help="write the compare table as CSV")
    p.add_argument("--plot", metavar="FILE",
                   help="render exact vs empirical frequencies to an image")
    common(p)

    p = sub.add_parser("query", help="evaluate queries on the posterior")
    p.add_argument("program")
    strategy(p)
    p.add_argument("--query", action="append", required=True)
    common(p)

    return ap


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _load_program(path: str) -> lang.Program:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _Usage(f"cannot read {path}: {exc}")
    try:
        return lang.parse(text)
    except ParseError as exc:
        raise _Usage(f"{path}: {exc}")


class _Usage(Exception):
    pass


def _prior_efps(expr: str, program: lang.Program) -> EFps:
    try:
        e = lang.parse_expr(expr)
    except ParseError as exc:
        raise _Usage(f"invalid prior {expr!r}: {exc}")
    for ind in e.indeterminates():
        if ind.kind == PROGRAM and ind.name not in program.decls:
            raise _Usage(f"prior mentions unknown variable {ind.name!r}")
    return EFps(e)


def _strategy(args, program):
    if args.invariant:
        inv = _load_program(args.invariant)
        return semantics.Invariant(inv, uast_asserted=args.assert_uast)
    return semantics.Unroll(max_iters=args.unroll)


def _first_loop(program: lang.Program) -> lang.While:
    for s in program.body:
        if isinstance(s, lang.While):
            return s
    raise _Usage("program contains no while loop")


def _series_table(f: EFps, program, order):
    inds = [pvar(v) for v in program.decls]
    coeffs = series_expand(f.dist, inds, order)
    rows = []
    for state in sorted(coeffs, key=lambda s: (sum(s), s)):
        c = coeffs[state]
        fr = c.as_fraction()
        try:
            approx = c.as_float()
        except (KeyError, ValueError, ZeroDivisionError, OverflowError):
            approx = None
        rows.append({
            "state": dict(zip(program.decls, state)),
            "probability": str(fr) if fr is not None else to_string(c),
            "value": approx,
        })
    return rows


def _violation_probability(f: EFps) -> SymExpr:
    v = f.violation
    for ind in sorted(v.indeterminates(), key=lambda i: i.name):
        if ind.kind == PROGRAM:
            v = v.substitute(ind, SymExpr.const(1))
    return v


def _fmt_sym(e: SymExpr) -> str:
    s = to_string(e)
    if not e.is_rational():
        try:
            s += f" (~ {e.as_float():.10g})"
        except (KeyError, ValueError, ZeroDivisionError, OverflowError):
            pass
    return s


def _parse_query(text: str):
    text = text.strip()
    if "[" not in text or not text.endswith("]"):
        raise _Usage(f"malformed query {text!r}")
    head, _, inner = text.partition("[")
    inner = inner[:-1]
    head = head.strip()
    try:
        if head == "E":
            return query.Expectation(inner.strip())
        if head == "Var":
            return query.Variance(inner.strip())
        if head in ("M", "FM"):
            var, k = (x.strip() for x in inner.split(","))
            kind = "raw" if head == "M" else "factorial"
            return query.Moment(var, int(k), kind)
        if head == "P":
            return query.Probability(lang.parse_guard(inner))
        if head == "Tail":
            var, n = (x.strip() for x in inner.split(","))
            return query.TailBound(var, int(n))
    except (ValueError, ParseError) as exc:
        raise _Usage(f"malformed query {text!r}: {exc}")
    raise _Usage(f"unknown query kind {head!r}")


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _plot_series(path, rows, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [",".join(str(v) for v in r["state"].values()) for r in rows]
    values = [r["value"] if r["value"] is not None else 0.0 for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 0.5), 4))
    ax.bar(range(len(labels)), values, color="#4878b0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("probability")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_compare(path, rows, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [",".join(str(v) for v in r["state"].values()) for r in rows]
    x = range(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, len(labels) * 0.5), 4))
    ax.bar([i - 0.2 for i in x], [r["exact"] for r in rows], width=0.4,
           label="exact", color="#4878b0")
    ax.bar([i + 0.2 for i in x], [r["empirical"] for r in rows], width=0.4,
           label="empirical", color="#ee8544")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("probability")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _report_infer(result, program, args, out):
    f = result.efps
    rows = _series_table(f, program, args.order)
    viol = _violation_probability(f)
    payload = {
        "closed_form": gf.to_json(f),
        "series": rows,
        "violation_probability": to_string(viol),
        "residual_mass": to_string(result.residual_mass),
        "converged": result.converged,
        "caveats": list(f.caveats) + list(result.notes),
    }
    queries = []
    for qtext in getattr(args, "query", []):
        q = _parse_query(qtext)
        val = query.evaluate(f, q)
        if isinstance(val, EFps):
            queries.append({"query": qtext, "value": gf.to_text(val)})
        else:
            try:
                approx = val.as_float()
            except (KeyError, ValueError, ZeroDivisionError, OverflowError):
                approx = None
            queries.append({"query": qtext, "value": to_string(val),
                            "approx": approx})
    if queries:
        payload["queries"] = queries
    if args.csv:
        _write_csv(args.csv, ["state", "probability", "value"], rows)
    if args.plot:
        _plot_series(args.plot, rows, os.path.basename(args.program))
    if args.json:
        print(json.dumps(payload, indent=2), file=out)
        return
    print(f"closed form: {gf.to_text(f)}", file=out)
    print(f"violation probability: {_fmt_sym(viol)}", file=out)
    print(f"residual (non-termination) mass: "
          f"{_fmt_sym(result.residual_mass)}", file=out)
    if not result.converged:
        print("warning: loop unrolling did not converge", file=out)
    for c in payload["caveats"]:
        print(f"caveat: {c}", file=out)
    print(f"series (order {args.order}):", file=out)
    for r in rows:
        state = ", ".join(f"{k}={v}" for k, v in r["state"].items())
        print(f"  {state or '()'}\t{r['probability']}", file=out)
    for q in queries:
        approx = q.get("approx")
        suffix = f" (~ {approx:.10g})" if approx is not None else ""
        print(f"{q['query']} = {q['value']}{suffix}", file=out)


def _cmd_infer(args, out):
    program = _load_program(args.program)
    prior = _prior_efps(args.prior, program)
    strat = _strategy(args, program)
    if args.unconditioned:
        result = semantics.transform(program, prior, strat)
    else:
        result = semantics.conditioned(program, prior, strat)
        if result.efps.dist.is_zero() and not prior.dist.is_zero():
            raise UndefinedNormalization(
                "the posterior carries no probability mass")
    _report_infer(result, program, args, out)
    return EXIT_OK


def _cmd_query(args, out):
    args.csv = None
    args.plot = None
    args.unconditioned = False
    return _cmd_infer(args, out)


def _cmd_check_equiv(args, out):
    left = _load_program(args.left)
    right = _load_program(args.right)
    verdict = equiv.check_equiv(left, right)
    if args.json:
        print(json.dumps(equiv.verdict_json(verdict), indent=2), file=out)
    elif isinstance(verdict, equiv.Equal):
        print("equivalent", file=out)
    elif isinstance(verdict, equiv.NotEqual):
        print(f"not equivalent; counterexample input {verdict.counterexample}",
              file=out)
        print(f"  left:  {gf.to_text(verdict.lhs_value)}", file=out)
        print(f"  right: {gf.to_text(verdict.rhs_value)}", file=out)
    else:
        print(f"inconclusive: {verdict.reason}", file=out)
    return EXIT_OK if isinstance(verdict, equiv.Equal) else EXIT_REJECTED


def _cmd_check_invariant(args, out):
    program = _load_program(args.program)
    loop = _first_loop(program)
    inv = _load_program(args.invariant)
    verdict = equiv.check_invariant(loop, inv)
    if args.json:
        print(json.dumps(equiv.verdict_json(verdict), indent=2), file=out)
    elif isinstance(verdict, equiv.Equal):
        print("invariant verified", file=out)
    elif isinstance(verdict, equiv.NotEqual):
        print(f"invariant rejected; counterexample input "
              f"{verdict.counterexample}", file=out)
    else:
        print(f"inconclusive: {verdict.reason}", file=out)
    return EXIT_OK if isinstance(verdict, equiv.Equal) else EXIT_REJECTED


def _cmd_synthesize(args, out):
    program = _load_program(args.program)
    loop = _first_loop(program)
    template = _load_program(args.template)
    outcome, system = synth.synthesize(loop, template)
    if args.json:
        payload = {"outcome": outcome.outcome,
                   "equations": [str(e) for e in system.equations]}
        if isinstance(outcome, synth.Solved):
            payload["assignments"] = {
                k: _fmt_ratfn(v) for k, v in outcome.assignments.items()}
        if isinstance(outcome, synth.Unsolved):
            payload["residual"] = [str(e) for e in outcome.residual.equations]
        print(json.dumps(payload, indent=2), file=out)
    else:
        if isinstance(outcome, synth.Solved):
            for k, v in sorted(outcome.assignments.items()):
                print(f"{k} = {_fmt_ratfn(v)}", file=out)
        elif isinstance(outcome, synth.NoSolution):
            print("no parameter values make the template an invariant",
                  file=out)
        else:
            print("could not discharge the constraint system:", file=out)
            print(outcome.residual.pretty(), file=out)
    return EXIT_OK if isinstance(outcome, synth.Solved) else EXIT_UNSOLVED


def _fmt_ratfn(v) -> str:
    import math

    from .symexpr import Poly, poly_to_str

    num, den = v.num, v.den
    if den.is_constant():
        # pull fractional coefficients into a common denominator so a
        # solution like q scaled by 1/3 reads "q/3"
        d = den.constant_term()
        scaled = num.scale(1 / d) if d != 1 else num
        lcm = 1
        for c in scaled.terms.values():
            lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
        if lcm == 1:
            return poly_to_str(scaled)
        top = poly_to_str(scaled.scale(lcm))
        return f"{top}/{lcm}" if "+" not in top and "-" not in top \
            else f"({top})/{lcm}"
    return f"({poly_to_str(num)})/({poly_to_str(den)})"


def _cmd_mc_check(args, out):
    program = _load_program(args.program)
    prior = _prior_efps(args.prior, program)
    strat = _strategy(args, program)
    result = semantics.conditioned(program, prior, strat)
    s0 = _prior_point(args.prior, program)
    cfg = oracle.RunConfig(samples=args.samples, max_steps=args.max_steps,
                           seed=args.seed)
    empirical = oracle.estimate_posterior(program, s0, cfg)
    report = oracle.compare(result.efps, empirical, top_k=args.top)
    rows = [dict(r) for r in report.rows]
    if args.csv:
        _write_csv(args.csv, ["state", "exact", "empirical",
                              "ci_low", "ci_high", "z"], rows)
    if args.plot:
        _plot_compare(args.plot, rows, os.path.basename(args.program))
    if args.json:
        print(json.dumps({
            "passed": report.passed,
            "max_abs_dev": report.max_abs_dev,
            "violated_rate": empirical.violated_rate,
            "timeout_rate": empirical.timeout_rate,
            "rows": rows,
        }, indent=2), file=out)
    else:
        print(f"samples: {args.samples}  violated: "
              f"{empirical.violated_rate:.6f}  timeout: "
              f"{empirical.timeout_rate:.6f}", file=out)
        for r in rows:
            state = ", ".join(f"{k}={v}" for k, v in r["state"].items())
            print(f"  {state}\texact={r['exact']:.6f}\t"
                  f"empirical={r['empirical']:.6f}\tz={r['z']:+.2f}", file=out)
        print("PASS" if report.passed else "FAIL", file=out)
    return EXIT_OK if report.passed else EXIT_USAGE


def _prior_point(expr: str, program) -> dict:
    """Interpret a monomial prior as the initial state for sampling."""
    try:
        e = lang.parse_expr(expr)
    except ParseError:
        return {}
    rf = e.single_ratfn()
    if rf is None or not rf.den.is_constant() or len(rf.num.terms) != 1:
        raise _Usage("mc-check needs a point-mass (monomial) prior")
    (mono, _), = rf.num.terms.items()
    return {ind.name: exp for ind, exp in mono if ind.kind == PROGRAM}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


_COMMANDS = {
    "infer": _cmd_infer,
    "check-equiv": _cmd_check_equiv,
    "check-invariant": _cmd_check_invariant,
    "synthesize": _cmd_synthesize,
    "mc-check": _cmd_mc_check,
    "query": _cmd_query,
}


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args, out)
    except _Usage as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=err)
        return EXIT_USAGE
    except _FRAGMENT_ERRORS as exc:
        print(f"unsupported fragment: {exc}", file=err)
        return EXIT_FRAGMENT
    except InvariantRejected as exc:
        print(f"invariant rejected: {exc}", file=err)
        return EXIT_REJECTED
    except (UndefinedNormalization, DegenerateConditioning) as exc:
        print(f"conditioned semantics undefined "
              f"(observation violated almost surely): {exc}", file=err)
        return EXIT_UNDEFINED
    except PgfkitError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
