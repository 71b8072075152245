"""Extended generating functions over program states.

An `EFps` is a formal power series in the program indeterminates together
with a structurally separate observation-violation mass (the coefficient of
the violation symbol).  Keeping the violation outside the series reflects
that the extended series are not closed under multiplication by the
violation symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import symexpr as sx
from .errors import UndefinedNormalization, UnsupportedGuard
from .symexpr import (
    EULER,
    META,
    PARAMETER,
    PROGRAM,
    Indeterminate,
    Poly,
    SymExpr,
    SX_ONE,
    SX_ZERO,
)

# Degree cap for expanding a finite marginal state-wise (var-vs-var guards).
FINITE_MARGINAL_CAP = 512


def pvar(name: str) -> Indeterminate:
    """The program indeterminate tracking variable `name`."""
    return Indeterminate(name, PROGRAM)


def mvar(name: str) -> Indeterminate:
    """The meta-indeterminate paired with program variable `name`."""
    return Indeterminate("$" + name, META)


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------

CMP_OPS = ("<", "<=", "=", "!=", ">=", ">")


@dataclass(frozen=True)
class GTrue:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class GFalse:
    def __str__(self):
        return "false"


@dataclass(frozen=True)
class VarCmpConst:
    var: str
    op: str
    n: int

    def __str__(self):
        return f"{self.var} {self.op} {self.n}"


@dataclass(frozen=True)
class VarModConst:
    var: str
    residue: int
    modulus: int

    def __str__(self):
        return f"{self.var} % {self.modulus} = {self.residue}"


@dataclass(frozen=True)
class VarCmpVar:
    lhs: str
    op: str
    rhs: str

    def __str__(self):
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class GAnd:
    lhs: object
    rhs: object

    def __str__(self):
        return f"({self.lhs}) && ({self.rhs})"


@dataclass(frozen=True)
class GOr:
    lhs: object
    rhs: object

    def __str__(self):
        return f"({self.lhs}) || ({self.rhs})"


@dataclass(frozen=True)
class GNot:
    inner: object

    def __str__(self):
        return f"!({self.inner})"


def guard_negate(g):
    if isinstance(g, GTrue):
        return GFalse()
    if isinstance(g, GFalse):
        return GTrue()
    if isinstance(g, GNot):
        return g.inner
    return GNot(g)


_CMP_FN = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}

# i op y  <->  y (mirror op) i
_MIRROR = {"<": ">", "<=": ">=", "=": "=", "!=": "!=", ">=": "<=", ">": "<"}


def guard_eval(g, state) -> bool:
    """Evaluate a guard on a concrete state (missing variables read as 0)."""
    if isinstance(g, GTrue):
        return True
    if isinstance(g, GFalse):
        return False
    if isinstance(g, VarCmpConst):
        return _CMP_FN[g.op](state.get(g.var, 0), g.n)
    if isinstance(g, VarModConst):
        return state.get(g.var, 0) % g.modulus == g.residue
    if isinstance(g, VarCmpVar):
        return _CMP_FN[g.op](state.get(g.lhs, 0), state.get(g.rhs, 0))
    if isinstance(g, GAnd):
        return guard_eval(g.lhs, state) and guard_eval(g.rhs, state)
    if isinstance(g, GOr):
        return guard_eval(g.lhs, state) or guard_eval(g.rhs, state)
    if isinstance(g, GNot):
        return not guard_eval(g.inner, state)
    raise TypeError(f"not a guard: {g!r}")


def guard_variables(g):
    if isinstance(g, (GTrue, GFalse)):
        return set()
    if isinstance(g, VarCmpConst):
        return {g.var}
    if isinstance(g, VarModConst):
        return {g.var}
    if isinstance(g, VarCmpVar):
        return {g.lhs, g.rhs}
    if isinstance(g, (GAnd, GOr)):
        return guard_variables(g.lhs) | guard_variables(g.rhs)
    if isinstance(g, GNot):
        return guard_variables(g.inner)
    raise TypeError(f"not a guard: {g!r}")


# ---------------------------------------------------------------------------
# EFps
# ---------------------------------------------------------------------------


class EFps:
    """dist + violation * X_flash, with the violation kept apart.

    `caveats` carries advisory strings (e.g. parametric normalization);
    it does not participate in equality.
    """

    __slots__ = ("dist", "violation", "caveats")

    def __init__(self, dist: SymExpr, violation: SymExpr = SX_ZERO, caveats=()):
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "violation", violation)
        object.__setattr__(self, "caveats", tuple(caveats))

    def __setattr__(self, *_):
        raise AttributeError("EFps is immutable")

    @staticmethod
    def unit() -> "EFps":
        """The empty-state point mass (prior "1")."""
        return EFps(SX_ONE)

    @staticmethod
    def dirac(state) -> "EFps":
        p = Poly.const(1)
        for v, n in state.items():
            p = p * Poly.var(pvar(v), n) if n else p
        return EFps(SymExpr.from_poly(p))

    def __add__(self, other: "EFps") -> "EFps":
        return EFps(self.dist + other.dist, self.violation + other.violation,
                    self.caveats + other.caveats)

    def __sub__(self, other: "EFps") -> "EFps":
        return EFps(self.dist - other.dist, self.violation - other.violation,
                    self.caveats)

    def scale(self, c) -> "EFps":
        return EFps(self.dist.scale(c), self.violation.scale(c), self.caveats)

    def with_violation(self, violation: SymExpr) -> "EFps":
        return EFps(self.dist, violation, self.caveats)

    def with_caveats(self, extra) -> "EFps":
        return EFps(self.dist, self.violation, self.caveats + tuple(extra))

    def __eq__(self, other):
        if not isinstance(other, EFps):
            return NotImplemented
        return (self.dist.eq_canonical(other.dist)
                and self.violation.eq_canonical(other.violation))

    def __hash__(self):
        return hash((self.dist, self.violation))

    def structurally_equal(self, other: "EFps") -> bool:
        return (self.dist.structurally_equal(other.dist)
                and self.violation.structurally_equal(other.violation))

    def program_indeterminates(self):
        return {v for v in self.dist.indeterminates() if v.kind == PROGRAM}

    def __repr__(self):
        return to_text(self)


def mass(f: EFps) -> SymExpr:
    """Total probability mass of the distribution part (violation excluded)."""
    out = f.dist
    for v in sorted(f.program_indeterminates(), key=lambda i: i.sort_key):
        out = out.substitute(v, SX_ONE)
    return out


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


def filter(f: EFps, g) -> EFps:  # noqa: A001 - spec operation name
    """Restrict the distribution part to states satisfying the guard.

    The result's violation is zero; the caller decides what to do with the
    filtered-out mass.
    """
    return EFps(_filter_dist(f.dist, g))


def _filter_dist(dist: SymExpr, g) -> SymExpr:
    if dist.is_zero() or isinstance(g, GTrue):
        return dist
    if isinstance(g, GFalse):
        return SX_ZERO
    support = finite_support(dist)
    if support is not None:
        acc = SX_ZERO
        for state, coeff in support:
            if guard_eval(g, state):
                acc = acc + coeff * _state_monomial(state)
        return acc
    if isinstance(g, GNot):
        return dist - _filter_dist(dist, g.inner)
    if isinstance(g, GAnd):
        return _filter_dist(_filter_dist(dist, g.lhs), g.rhs)
    if isinstance(g, GOr):
        a = _filter_dist(dist, g.lhs)
        return a + _filter_dist(dist, g.rhs) - _filter_dist(a, g.rhs)
    if isinstance(g, VarCmpConst):
        return _filter_cmp_const(dist, g)
    if isinstance(g, VarModConst):
        return _filter_mod(dist, g)
    if isinstance(g, VarCmpVar):
        return _filter_var_var(dist, g)
    raise TypeError(f"not a guard: {g!r}")


def _state_monomial(state) -> SymExpr:
    p = Poly.const(1)
    for v, n in state.items():
        if n:
            p = p * Poly.var(pvar(v), n)
    return SymExpr.from_poly(p)


def _truncate_below(dist: SymExpr, x: Indeterminate, n: int) -> SymExpr:
    """The part of the series with exponent of x strictly below n."""
    acc = SX_ZERO
    for i in range(n):
        c = dist.taylor_coeff(x, i)
        if not c.is_zero():
            acc = acc + c * SymExpr.var(x, i)
    return acc


def _filter_cmp_const(dist: SymExpr, g: VarCmpConst) -> SymExpr:
    x = pvar(g.var)
    op, n = g.op, g.n
    if op == "<":
        return _truncate_below(dist, x, n)
    if op == "<=":
        return _truncate_below(dist, x, n + 1)
    if op == "=":
        c = dist.taylor_coeff(x, n)
        return c * SymExpr.var(x, n) if not c.is_zero() else SX_ZERO
    if op == "!=":
        return dist - _filter_cmp_const(dist, VarCmpConst(g.var, "=", n))
    if op == ">=":
        return dist - _truncate_below(dist, x, n)
    if op == ">":
        return dist - _truncate_below(dist, x, n + 1)
    raise UnsupportedGuard(f"unknown comparison {op!r}")


def _filter_mod(dist: SymExpr, g: VarModConst) -> SymExpr:
    if g.modulus != 2:
        raise UnsupportedGuard(
            f"modulus {g.modulus} not supported (only parity via the +/-1 trick)")
    x = pvar(g.var)
    neg = dist.substitute(x, SymExpr.from_poly(Poly.var(x).scale(-1)))
    if g.residue % 2 == 0:
        return (dist + neg).scale(Fraction(1, 2))
    return (dist - neg).scale(Fraction(1, 2))


def _polynomial_degree_in(dist: SymExpr, x: Indeterminate):
    """Degree of dist as a polynomial in x, or None if not polynomial in x."""
    deg = 0
    for t in dist.terms:
        if t.rat.den.contains(x) or t.exp_arg.contains(x):
            return None
        deg = max(deg, t.rat.num.degree_in(x))
    return deg


def _decompose_by_var(dist: SymExpr, x: Indeterminate):
    """Coefficient expressions of x^i, for dist polynomial in x."""
    slices = {}
    for t in dist.terms:
        by_exp = {}
        for m, c in t.rat.num.terms.items():
            e = dict(m).get(x, 0)
            rest = sx.mono_make([(w, k) for w, k in m if w != x])
            by_exp.setdefault(e, []).append((rest, c))
        for e, monos in by_exp.items():
            piece = SymExpr.from_ratfn(
                sx.RationalFn(Poly(monos), t.rat.den), t.exp_arg)
            slices[e] = slices.get(e, SX_ZERO) + piece
    return slices


def _filter_var_var(dist: SymExpr, g: VarCmpVar) -> SymExpr:
    for probe, other, mirrored in ((g.lhs, g.rhs, False), (g.rhs, g.lhs, True)):
        x = pvar(probe)
        deg = _polynomial_degree_in(dist, x)
        if deg is None or deg > FINITE_MARGINAL_CAP:
            continue
        op = _MIRROR[g.op] if not mirrored else g.op
        # fix probe = i; the guard becomes `other (op) i` with op mirrored
        # so that the remaining variable is on the left.
        acc = SX_ZERO
        for i, coeff in _decompose_by_var(dist, x).items():
            kept = _filter_dist(coeff, VarCmpConst(other, op, i))
            if not kept.is_zero():
                acc = acc + kept * SymExpr.var(x, i)
        return acc
    raise UnsupportedGuard(
        f"guard {g}: neither marginal is a polynomial within the degree cap")


def finite_support(dist: SymExpr):
    """(state, coefficient) pairs when dist is polynomial in the program vars.

    Returns None when any denominator or exp argument mentions a program
    indeterminate (infinite or non-polynomial support).
    """
    out = {}
    for t in dist.terms:
        if any(v.kind == PROGRAM for v in
               t.rat.den.indeterminates() | t.exp_arg.indeterminates()):
            return None
        for m, c in t.rat.num.terms.items():
            state = {}
            rest = []
            for v, e in m:
                if v.kind == PROGRAM:
                    state[v.name] = e
                else:
                    rest.append((v, e))
            key = frozenset(state.items())
            piece = SymExpr.from_ratfn(
                sx.RationalFn(Poly([(sx.mono_make(rest), c)]), t.rat.den),
                t.exp_arg)
            out[key] = out.get(key, SX_ZERO) + piece
    return [(dict(k), v) for k, v in out.items() if not v.is_zero()]


# ---------------------------------------------------------------------------
# Normalization, coefficients, order check
# ---------------------------------------------------------------------------


def normalize(f: EFps) -> EFps:
    """Divide out the violation mass: dist / (1 - violation)."""
    if f.violation.is_zero():
        return EFps(f.dist, SX_ZERO, f.caveats)
    remaining = SX_ONE - f.violation
    if remaining.is_zero():
        raise UndefinedNormalization(
            "observation violated almost surely (violation mass = 1)")
    caveats = f.caveats
    if any(v.kind == PARAMETER for v in f.violation.indeterminates()):
        caveats = caveats + (
            "parametric normalization: result is a symbolic quotient, "
            "defined only where the violation mass is < 1",)
    return EFps(f.dist.divide(remaining), SX_ZERO, caveats)


def coefficient(f: EFps, state) -> SymExpr:
    """Taylor coefficient of the distribution part at the given state."""
    out = f.dist
    for v, n in state.items():
        out = out.taylor_coeff(pvar(v), n)
    for ind in sorted((i for i in out.indeterminates() if i.kind == PROGRAM),
                      key=lambda i: i.sort_key):
        out = out.substitute(ind, SX_ZERO)
    return out


def _numeric(e: SymExpr):
    v = e.as_fraction()
    return v if v is not None else e.evaluate({})


def series_leq(a: EFps, b: EFps, order: int) -> bool:
    """Coefficient-wise <= up to total degree `order`, violation included."""
    vars = sorted(a.program_indeterminates() | b.program_indeterminates(),
                  key=lambda i: i.sort_key)
    eps = 1e-12
    if vars:
        sa = sx.series_expand(a.dist, vars, order)
        sb = sx.series_expand(b.dist, vars, order)
        for key in set(sa) | set(sb):
            ca = _numeric(sa.get(key, SX_ZERO))
            cb = _numeric(sb.get(key, SX_ZERO))
            if isinstance(ca, Fraction) and isinstance(cb, Fraction):
                if ca > cb:
                    return False
            elif float(ca) > float(cb) + eps:
                return False
    else:
        ca, cb = _numeric(a.dist), _numeric(b.dist)
        if isinstance(ca, Fraction) and isinstance(cb, Fraction):
            if ca > cb:
                return False
        elif float(ca) > float(cb) + eps:
            return False
    va, vb = _numeric(a.violation), _numeric(b.violation)
    if isinstance(va, Fraction) and isinstance(vb, Fraction):
        return va <= vb
    return float(va) <= float(vb) + eps


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def to_text(f: EFps) -> str:
    if f.violation.is_zero():
        return sx.to_string(f.dist)
    viol = sx.to_string(f.violation)
    if len(f.violation.terms) > 1:
        viol = f"({viol})"
    return f"{sx.to_string(f.dist)} + {viol}*!"


def to_json(f: EFps) -> dict:
    return {"dist": sx.to_string(f.dist),
            "violation": sx.to_string(f.violation)}
