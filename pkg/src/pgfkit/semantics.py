"""The unconditioned distribution transformer and its loop strategies.

Each statement maps an extended generating function to another one; observe
statements move mass into the violation term, and while loops are handled
either by bounded unrolling (with fixpoint detection) or by substituting a
verified loop-free invariant program.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import gf, lang
from .errors import (
    FragmentError,
    InvariantRejected,
    UnsupportedAssignment,
)
from .gf import EFps, filter as gf_filter, guard_negate, mass, normalize, pvar
from .lang import (
    Assign,
    DistLiteral,
    IfElse,
    IidIncr,
    Observe,
    PChoice,
    Program,
    Sample,
    Skip,
    While,
    classify_assignment,
)
from .symexpr import (
    PARAMETER,
    Indeterminate,
    Poly,
    RationalFn,
    SymExpr,
    SX_ONE,
    SX_ZERO,
)

DEFAULT_UNROLL = 64


@dataclass(frozen=True)
class Unroll:
    max_iters: int = DEFAULT_UNROLL
    detect_fixpoint: bool = True


@dataclass(frozen=True)
class Invariant:
    program: Program
    uast_asserted: bool = False


@dataclass(frozen=True)
class TransformResult:
    efps: EFps
    residual_mass: SymExpr = SX_ZERO
    converged: bool = True
    notes: tuple = ()


# ---------------------------------------------------------------------------
# Distribution PGFs
# ---------------------------------------------------------------------------


def _prob_poly(p) -> Poly:
    if isinstance(p, str):
        return Poly.var(Indeterminate(p, PARAMETER))
    if isinstance(p, Poly):
        return p
    return Poly.const(Fraction(p))


def prob_expr(p) -> SymExpr:
    return SymExpr.from_poly(_prob_poly(p))


def dist_pgf(d: DistLiteral, v: Indeterminate) -> SymExpr:
    """The probability generating function of a distribution literal in v."""
    t = Poly.var(v)
    one = Poly.const(1)
    if d.kind == "bernoulli":
        p = _prob_poly(d.params[0])
        return SymExpr.from_poly(one - p + p * t)
    if d.kind == "geometric":
        p = _prob_poly(d.params[0])
        den = one - (one - p) * t
        return SymExpr.from_ratfn(RationalFn(p, den))
    if d.kind == "poisson":
        lam = _prob_poly(d.params[0])
        return SymExpr.exp_of(lam * t - lam)
    if d.kind == "uniform":
        a, b = int(d.params[0]), int(d.params[1])
        acc = Poly()
        for i in range(a, b + 1):
            acc = acc + Poly.var(v, i) if i else acc + one
        return SymExpr.from_poly(acc.scale(Fraction(1, b - a + 1)))
    if d.kind == "binomial":
        n = int(d.params[0])
        p = _prob_poly(d.params[1])
        return SymExpr.from_poly((one - p + p * t) ** n)
    if d.kind == "dirac":
        return SymExpr.from_poly(Poly.var(v, int(d.params[0])))
    raise ValueError(f"unknown distribution {d.kind!r}")


# ---------------------------------------------------------------------------
# Transformer
# ---------------------------------------------------------------------------


@dataclass
class _Ctx:
    strategy: object
    residual: SymExpr = SX_ZERO
    converged: bool = True
    notes: list = field(default_factory=list)

    def scaled(self, other: "_Ctx", factor: SymExpr):
        self.residual = self.residual + other.residual * factor
        self.converged = self.converged and other.converged
        self.notes.extend(other.notes)


def transform(p, g: EFps, strat=None) -> TransformResult:
    """Unconditioned semantics of a program applied to an input eFPS."""
    strat = strat or Unroll()
    stmts = p.body if isinstance(p, Program) else tuple(p)
    ctx = _Ctx(strategy=strat)
    out = _apply_stmts(stmts, g, ctx)
    return TransformResult(out, ctx.residual, ctx.converged, tuple(ctx.notes))


def conditioned(p, g: EFps, strat=None) -> TransformResult:
    """Posterior semantics: normalize the unconditioned result."""
    res = transform(p, g, strat)
    return TransformResult(normalize(res.efps), res.residual_mass,
                           res.converged, res.notes)


def _apply_stmts(stmts, g: EFps, ctx: _Ctx) -> EFps:
    for s in stmts:
        g = _apply_stmt(s, g, ctx)
    return g


def _scale_efps(f: EFps, factor: SymExpr) -> EFps:
    return EFps(f.dist * factor, f.violation * factor, f.caveats)


def _apply_stmt(s, g: EFps, ctx: _Ctx) -> EFps:
    if isinstance(s, Skip):
        return g
    if isinstance(s, Observe):
        kept = gf_filter(g, s.guard)
        lost = mass(EFps(g.dist - kept.dist))
        return EFps(kept.dist, g.violation + lost, g.caveats)
    if isinstance(s, Assign):
        return _apply_assign(s, g)
    if isinstance(s, Sample):
        x = pvar(s.var)
        marginalized = g.dist.substitute(x, SX_ONE)
        return EFps(marginalized * dist_pgf(s.dist, x), g.violation, g.caveats)
    if isinstance(s, IidIncr):
        x, y = pvar(s.var), pvar(s.count_var)
        pgf = dist_pgf(s.dist, x)
        return EFps(g.dist.substitute(y, SymExpr.var(y) * pgf),
                    g.violation, g.caveats)
    if isinstance(s, PChoice):
        pe = prob_expr(s.prob)
        qe = SX_ONE - pe
        sub_l, sub_r = _Ctx(ctx.strategy), _Ctx(ctx.strategy)
        left = _apply_stmts(s.left, g, sub_l)
        right = _apply_stmts(s.right, g, sub_r)
        ctx.scaled(sub_l, pe)
        ctx.scaled(sub_r, qe)
        return _scale_efps(left, pe) + _scale_efps(right, qe)
    if isinstance(s, IfElse):
        then_in = gf_filter(g, s.guard)
        else_in = gf_filter(g, guard_negate(s.guard))
        t = _apply_stmts(s.then, then_in, ctx)
        e = _apply_stmts(s.els, else_in, ctx)
        return t + e + EFps(SX_ZERO, g.violation)
    if isinstance(s, While):
        if isinstance(ctx.strategy, Invariant):
            res = apply_invariant(s, ctx.strategy.program, g,
                                  ctx.strategy.uast_asserted)
        else:
            st = ctx.strategy
            res = unroll_loop(s.guard, s.body, g, st.max_iters,
                              st.detect_fixpoint, strategy=st)
        ctx.residual = ctx.residual + res.residual_mass
        ctx.converged = ctx.converged and res.converged
        ctx.notes.extend(res.notes)
        return res.efps
    raise TypeError(f"not a statement: {s!r}")


def _apply_assign(s: Assign, g: EFps) -> EFps:
    form = classify_assignment(s)
    if form is None:
        raise UnsupportedAssignment(
            f"no closed-form rule for {s.var} := {lang._pp_aexpr(s.expr)}"
            + (f" at {s.loc}" if s.loc else ""))
    x = pvar(s.var)
    tag = form[0]
    if tag == "const":
        d = g.dist.substitute(x, SX_ONE) * SymExpr.var(x, form[1]) \
            if form[1] else g.dist.substitute(x, SX_ONE)
        return EFps(d, g.violation, g.caveats)
    if tag == "incr":
        d = g.dist * SymExpr.var(x, form[1]) if form[1] else g.dist
        return EFps(d, g.violation, g.caveats)
    if tag == "decr":
        d = g.dist
        for _ in range(form[1]):
            d = _decrement(d, x)
        return EFps(d, g.violation, g.caveats)
    if tag == "addvar":
        y = pvar(form[1])
        d = g.dist.substitute(y, SymExpr.var(x) * SymExpr.var(y))
        return EFps(d, g.violation, g.caveats)
    if tag == "copy":
        y = pvar(form[1])
        d = g.dist.substitute(x, SX_ONE)
        d = d.substitute(y, SymExpr.var(x) * SymExpr.var(y))
        return EFps(d, g.violation, g.caveats)
    raise UnsupportedAssignment(f"unhandled assignment form {tag!r}")


def _decrement(dist: SymExpr, x: Indeterminate) -> SymExpr:
    """Monus decrement: (G - G[x/0]) shifted down one power, plus G[x/0]."""
    at0 = dist.substitute(x, SX_ZERO)
    moving = dist - at0
    shifted = SX_ZERO
    for t in moving.terms:
        if t.exp_arg.contains(x):
            raise UnsupportedAssignment(
                f"decrement of {x.name} under an exp closed form has no "
                "rational representation")
        num = t.rat.num
        try:
            shifted_num = num.divide_monomial(((x, 1),))
        except ValueError as exc:
            raise UnsupportedAssignment(
                f"decrement of {x.name}: closed form is not shiftable") from exc
        shifted = shifted + SymExpr.from_ratfn(
            RationalFn(shifted_num, t.rat.den), t.exp_arg)
    return shifted + at0


# ---------------------------------------------------------------------------
# Loops
# ---------------------------------------------------------------------------


def unroll_loop(b, body, g: EFps, k: int, detect: bool = True,
                strategy=None) -> TransformResult:
    """Bounded unrolling of `while (b) { body }` on input g.

    One iteration = one execution of the loop body; the exit mass emitted
    before any iteration is included.  A fixpoint is declared when the alive
    part is unchanged across an iteration and that iteration emitted nothing;
    the remaining alive mass is then pure non-termination mass.
    """
    strategy = strategy or Unroll(max_iters=k, detect_fixpoint=detect)
    not_b = guard_negate(b)
    alive = EFps(gf_filter(g, b).dist)
    out_dist = gf_filter(g, not_b).dist
    out_viol = g.violation
    notes = []
    residual_extra = SX_ZERO
    body_converged = True
    fixpoint = False
    iterations = 0
    for i in range(k):
        if alive.dist.is_zero():
            break
        sub = _Ctx(strategy)
        nxt = _apply_stmts(body, alive, sub)
        residual_extra = residual_extra + sub.residual
        body_converged = body_converged and sub.converged
        notes.extend(sub.notes)
        iterations = i + 1
        exit_part = gf_filter(nxt, not_b).dist
        emitted_zero = exit_part.is_zero() and nxt.violation.is_zero()
        out_dist = out_dist + exit_part
        out_viol = out_viol + nxt.violation
        new_alive = EFps(gf_filter(nxt, b).dist)
        if detect and emitted_zero and (
                new_alive.structurally_equal(alive) or new_alive == alive):
            alive = new_alive
            fixpoint = True
            notes.append(f"loop fixpoint detected after {iterations} iteration(s)")
            break
        alive = new_alive
    drained = alive.dist.is_zero()
    converged = body_converged and (drained or fixpoint)
    if drained:
        residual = residual_extra
    else:
        residual = mass(alive) + residual_extra
        if not fixpoint:
            notes.append(
                f"loop unrolled {iterations} iteration(s); residual mass left")
    return TransformResult(EFps(out_dist, out_viol, g.caveats),
                           residual, converged, tuple(notes))


def apply_invariant(loop: While, inv: Program, g: EFps,
                    uast_asserted: bool = False) -> TransformResult:
    """Replace a loop by a verified loop-free invariant program."""
    from . import equiv  # deferred: equiv builds on this module

    report = lang.validate(inv)
    if not report.loop_free or not report.credip:
        reasons = "; ".join(r for _, r in report.unsupported) or "contains a loop"
        raise FragmentError(f"invariant program outside the decidable fragment: "
                            f"{reasons}")
    verdict = equiv.check_invariant(loop, inv)
    if isinstance(verdict, equiv.Equal):
        res = transform(inv, g, Unroll())
        notes = res.notes + ("loop invariant verified (exact loop semantics)",)
        if not uast_asserted:
            notes = notes + (
                "UAST not asserted: result is an upper bound on the loop "
                "semantics (exact if the loop terminates almost surely)",)
        return TransformResult(res.efps, res.residual_mass, res.converged, notes)
    if isinstance(verdict, equiv.NotEqual):
        raise InvariantRejected(
            f"invariant rejected; counterexample state {verdict.counterexample}",
            counterexample=verdict.counterexample, verdict=verdict)
    raise InvariantRejected(
        f"invariant check inconclusive: {verdict.reason}", verdict=verdict)
