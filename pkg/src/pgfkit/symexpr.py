"""Exact symbolic algebra kernel.

Values live in the class of expressions

    sum of  (N/D) * exp(E)

where N, D, E are multivariate polynomials over exact rationals.  This is
closed under the operations the generating-function engine needs: ring
arithmetic, division by a rational term, substitution, differentiation and
Taylor coefficient extraction.

Design notes:

* Coefficients are `fractions.Fraction`; nothing here ever touches floats
  except the explicit `as_float` / `evaluate` renderings.
* Denominators are normalized to leading coefficient 1 under graded-lex
  order, with heuristic cancellation (common monomial content, exact
  polynomial division).  Full multivariate GCD is deliberately absent;
  equality is decided by cross-multiplication, which does not need it.
* Integer constants inside exp arguments are migrated into the rational
  part as powers of a reserved symbol for Euler's number, so that e.g.
  normalization quotients like (a + b*e^4)/(c + d*e^4) stay exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key

from .errors import (
    DivisionByZero,
    DivisorUnsupported,
    IllDefinedProjection,
    NonPolynomialExpArg,
    SingularAtZero,
)

Rat = Fraction

# Indeterminate kinds.
PROGRAM = "program"
META = "meta"
PARAMETER = "parameter"
VIOLATION = "violation"
SCALAR = "scalar"  # reserved constants such as Euler's number

_KIND_RANK = {PROGRAM: 0, META: 1, PARAMETER: 2, SCALAR: 3, VIOLATION: 4}


@dataclass(frozen=True)
class Indeterminate:
    name: str
    kind: str = PROGRAM

    @property
    def sort_key(self):
        return (_KIND_RANK[self.kind], self.name)

    def __repr__(self):
        return self.name


# The reserved symbol standing for the constant e.  It only ever appears with
# integer exponents (negative ones live in denominators).
EULER = Indeterminate("@e", SCALAR)


def _is_series_var(ind: Indeterminate) -> bool:
    """Indeterminates in which expressions are read as power series."""
    return ind.kind in (PROGRAM, META)


# ---------------------------------------------------------------------------
# Monomials: sorted tuples of (indeterminate, positive exponent).
# ---------------------------------------------------------------------------

Monomial = tuple  # tuple[tuple[Indeterminate, int], ...]

MONO_ONE: Monomial = ()


def mono_make(pairs) -> Monomial:
    items = [(v, e) for v, e in pairs if e != 0]
    items.sort(key=lambda p: p[0].sort_key)
    return tuple(items)


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    acc = dict(a)
    for v, e in b:
        acc[v] = acc.get(v, 0) + e
    return mono_make(acc.items())


def mono_div(a: Monomial, b: Monomial):
    """a / b, or None when not divisible."""
    acc = dict(a)
    for v, e in b:
        r = acc.get(v, 0) - e
        if r < 0:
            return None
        if r == 0:
            acc.pop(v, None)
        else:
            acc[v] = r
    return mono_make(acc.items())


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_cmp(a: Monomial, b: Monomial) -> int:
    """Graded lexicographic comparison; positive when a > b."""
    da, db = mono_degree(a), mono_degree(b)
    if da != db:
        return 1 if da > db else -1
    ea, eb = dict(a), dict(b)
    for v in sorted(set(ea) | set(eb), key=lambda i: i.sort_key):
        xa, xb = ea.get(v, 0), eb.get(v, 0)
        if xa != xb:
            return 1 if xa > xb else -1
    return 0


_MONO_KEY = cmp_to_key(mono_cmp)


def mono_sortable(m: Monomial):
    """A plainly sortable rendering (for deterministic ordering of polys)."""
    return (mono_degree(m), tuple((v.sort_key, e) for v, e in m))


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------


class Poly:
    """Multivariate polynomial with Fraction coefficients.

    Immutable; `terms` maps monomials to nonzero coefficients.
    """

    __slots__ = ("terms", "_hash")

    def __init__(self, terms=None):
        t = {}
        if terms:
            for m, c in (terms.items() if isinstance(terms, dict) else terms):
                if c:
                    c0 = t.get(m)
                    s = c + c0 if c0 is not None else Fraction(c)
                    if s:
                        t[m] = s
                    else:
                        t.pop(m, None)
        object.__setattr__(self, "terms", t)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, *_):
        raise AttributeError("Poly is immutable")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def const(c) -> "Poly":
        c = Fraction(c)
        return Poly({MONO_ONE: c}) if c else Poly()

    @staticmethod
    def var(v: Indeterminate, exp: int = 1) -> "Poly":
        if exp == 0:
            return Poly.const(1)
        return Poly({mono_make([(v, exp)]): Fraction(1)})

    # -- predicates / accessors ---------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(m == MONO_ONE for m in self.terms)

    def constant_term(self) -> Fraction:
        return self.terms.get(MONO_ONE, Fraction(0))

    def as_constant(self):
        """The value when constant, else None."""
        if self.is_constant():
            return self.constant_term()
        return None

    def indeterminates(self):
        s = set()
        for m in self.terms:
            for v, _ in m:
                s.add(v)
        return s

    def contains(self, v: Indeterminate) -> bool:
        return any(any(w == v for w, _ in m) for m in self.terms)

    def degree(self) -> int:
        if not self.terms:
            return -1
        return max(mono_degree(m) for m in self.terms)

    def degree_in(self, v: Indeterminate) -> int:
        d = 0
        for m in self.terms:
            for w, e in m:
                if w == v:
                    d = max(d, e)
        return d

    def leading(self):
        """(monomial, coefficient) maximal under graded-lex."""
        if not self.terms:
            raise ValueError("zero polynomial has no leading term")
        m = max(self.terms, key=_MONO_KEY)
        return m, self.terms[m]

    # -- ring operations ----------------------------------------------------

    def __add__(self, other: "Poly") -> "Poly":
        if not other.terms:
            return self
        if not self.terms:
            return other
        t = dict(self.terms)
        for m, c in other.terms.items():
            s = t.get(m, Fraction(0)) + c
            if s:
                t[m] = s
            else:
                t.pop(m, None)
        return Poly(t)

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other: "Poly") -> "Poly":
        if not self.terms or not other.terms:
            return Poly()
        t = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                s = t.get(m, Fraction(0)) + c1 * c2
                if s:
                    t[m] = s
                else:
                    t.pop(m, None)
        return Poly(t)

    def scale(self, c) -> "Poly":
        c = Fraction(c)
        if not c:
            return Poly()
        return Poly({m: k * c for m, k in self.terms.items()})

    def __pow__(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative power of a polynomial")
        result = Poly.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    # -- substitution / calculus --------------------------------------------

    def subs(self, v: Indeterminate, r: "Poly") -> "Poly":
        """Replace v by the polynomial r."""
        if not self.contains(v):
            return self
        # group by exponent of v
        by_exp = {}
        for m, c in self.terms.items():
            e = dict(m).get(v, 0)
            rest = mono_make([(w, k) for w, k in m if w != v])
            by_exp.setdefault(e, []).append((rest, c))
        out = Poly()
        rpow = {0: Poly.const(1)}
        for e in sorted(by_exp):
            if e not in rpow:
                rpow[e] = r ** e
            out = out + Poly(by_exp[e]) * rpow[e]
        return out

    def subs_value(self, v: Indeterminate, value: Fraction) -> "Poly":
        return self.subs(v, Poly.const(value))

    def derivative(self, v: Indeterminate) -> "Poly":
        t = {}
        for m, c in self.terms.items():
            e = dict(m).get(v, 0)
            if e:
                rest = mono_make([(w, k) for w, k in m if w != v] + [(v, e - 1)])
                t[rest] = t.get(rest, Fraction(0)) + c * e
        return Poly(t)

    def exact_divide(self, g: "Poly"):
        """Quotient self/g when the division is exact, else None."""
        if g.is_zero():
            raise DivisionByZero("polynomial division by zero")
        gc = g.as_constant()
        if gc is not None:
            return self.scale(1 / gc)
        lm, lc = g.leading()
        r = self
        q = {}
        while not r.is_zero():
            rm, rc = r.leading()
            d = mono_div(rm, lm)
            if d is None:
                return None
            coef = rc / lc
            q[d] = q.get(d, Fraction(0)) + coef
            r = r - Poly({d: coef}) * g
        return Poly(q)

    def monomial_content(self) -> Monomial:
        """Largest monomial dividing every term."""
        if not self.terms:
            return MONO_ONE
        acc = None
        for m in self.terms:
            d = dict(m)
            if acc is None:
                acc = d
            else:
                acc = {v: min(e, d.get(v, 0)) for v, e in acc.items() if d.get(v, 0)}
            if not acc:
                return MONO_ONE
        return mono_make(acc.items())

    def divide_monomial(self, m: Monomial) -> "Poly":
        if m == MONO_ONE:
            return self
        t = {}
        for mm, c in self.terms.items():
            d = mono_div(mm, m)
            if d is None:
                raise ValueError("monomial does not divide all terms")
            t[d] = c
        return Poly(t)

    def evaluate(self, assignment) -> float:
        """Float value; `assignment` maps indeterminates to floats.

        EULER defaults to e.  Missing indeterminates raise KeyError.
        """
        total = 0.0
        for m, c in self.terms.items():
            val = float(c)
            for v, e in m:
                if v == EULER and v not in assignment:
                    val *= math.e ** e
                else:
                    val *= assignment[v] ** e
            total += val
        return total

    # -- comparison / rendering ---------------------------------------------

    def __eq__(self, other):
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(frozenset(self.terms.items())))
        return self._hash

    def sort_token(self):
        return tuple(sorted((mono_sortable(m), c) for m, c in self.terms.items()))

    def __repr__(self):
        return poly_to_str(self)


P_ZERO = Poly()
P_ONE = Poly.const(1)


def poly_to_str(p: Poly) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for m in sorted(p.terms, key=_MONO_KEY):
        c = p.terms[m]
        factors = []
        if m == MONO_ONE or abs(c) != 1:
            factors.append(str(abs(c)))
        for v, e in m:
            factors.append(v.name if e == 1 else f"{v.name}^{e}")
        s = "*".join(factors)
        parts.append(("- " if c < 0 else "+ ") + s if parts else ("-" + s if c < 0 else s))
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Rational functions
# ---------------------------------------------------------------------------


class RationalFn:
    """A quotient of polynomials kept in a normalized (not fully reduced) form.

    Normalization: zero numerator forces denominator 1; the common monomial
    content of numerator and denominator is cancelled; exact polynomial
    division is attempted in both directions; the denominator is scaled to
    leading coefficient 1.
    """

    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly = P_ONE, _normalized=False):
        if not _normalized:
            num, den = _rf_normalize(num, den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __setattr__(self, *_):
        raise AttributeError("RationalFn is immutable")

    @staticmethod
    def const(c) -> "RationalFn":
        return RationalFn(Poly.const(c), P_ONE, _normalized=True)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def as_constant(self):
        if self.den == P_ONE:
            return self.num.as_constant()
        nc, dc = self.num.as_constant(), self.den.as_constant()
        if nc is not None and dc is not None:
            return nc / dc
        return None

    def __add__(self, other: "RationalFn") -> "RationalFn":
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if self.den == other.den:
            return RationalFn(self.num + other.num, self.den)
        return RationalFn(self.num * other.den + other.num * self.den,
                          self.den * other.den)

    def __neg__(self) -> "RationalFn":
        return RationalFn(-self.num, self.den, _normalized=True)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other: "RationalFn") -> "RationalFn":
        return RationalFn(self.num * other.num, self.den * other.den)

    def __truediv__(self, other: "RationalFn") -> "RationalFn":
        if other.is_zero():
            raise DivisionByZero("division by zero rational function")
        return RationalFn(self.num * other.den, self.den * other.num)

    def scale(self, c) -> "RationalFn":
        return RationalFn(self.num.scale(c), self.den, _normalized=Fraction(c) != 0)

    def __pow__(self, n: int) -> "RationalFn":
        if n < 0:
            return RationalFn(self.den, self.num) ** (-n)
        return RationalFn(self.num ** n, self.den ** n)

    def __eq__(self, other):
        if not isinstance(other, RationalFn):
            return NotImplemented
        return self.num * other.den == other.num * self.den

    def __hash__(self):
        return hash((self.num, self.den))

    def subs(self, v: Indeterminate, r: "RationalFn") -> "RationalFn":
        n = _poly_subs_rf(self.num, v, r)
        d = _poly_subs_rf(self.den, v, r)
        if d.is_zero():
            raise IllDefinedProjection(
                f"denominator vanishes identically when substituting {v.name}")
        return n / d

    def derivative(self, v: Indeterminate) -> "RationalFn":
        n, d = self.num, self.den
        if not d.contains(v):
            return RationalFn(n.derivative(v), d)
        return RationalFn(n.derivative(v) * d - n * d.derivative(v), d * d)

    def evaluate(self, assignment) -> float:
        dv = self.den.evaluate(assignment)
        if dv == 0:
            raise ZeroDivisionError("denominator evaluates to zero")
        return self.num.evaluate(assignment) / dv

    def indeterminates(self):
        return self.num.indeterminates() | self.den.indeterminates()

    def sort_token(self):
        return (self.num.sort_token(), self.den.sort_token())

    def __repr__(self):
        if self.den == P_ONE:
            return poly_to_str(self.num)
        return f"({poly_to_str(self.num)})/({poly_to_str(self.den)})"


RF_ZERO = RationalFn(P_ZERO, P_ONE, _normalized=True)
RF_ONE = RationalFn(P_ONE, P_ONE, _normalized=True)


def _rf_normalize(num: Poly, den: Poly):
    if den.is_zero():
        raise DivisionByZero("zero denominator")
    if num.is_zero():
        return P_ZERO, P_ONE
    mc_n, mc_d = num.monomial_content(), den.monomial_content()
    common = mono_make([(v, min(e, dict(mc_d).get(v, 0)))
                        for v, e in mc_n if dict(mc_d).get(v, 0)])
    if common != MONO_ONE:
        num = num.divide_monomial(common)
        den = den.divide_monomial(common)
    if den.is_constant():
        return num.scale(1 / den.constant_term()), P_ONE
    q = num.exact_divide(den)
    if q is not None:
        return q, P_ONE
    if not num.is_constant():
        q = den.exact_divide(num)
        if q is not None:
            lc = q.leading()[1]
            return Poly.const(1 / lc), q.scale(1 / lc)
    lc = den.leading()[1]
    if lc != 1:
        num, den = num.scale(1 / lc), den.scale(1 / lc)
    return num, den


def _poly_subs_rf(p: Poly, v: Indeterminate, r: RationalFn) -> RationalFn:
    """Substitute a rational function into a polynomial."""
    if not p.contains(v):
        return RationalFn(p, P_ONE, _normalized=True)
    rp = r.num if r.den == P_ONE else None
    if rp is not None:
        return RationalFn(p.subs(v, rp), P_ONE)
    by_exp = {}
    for m, c in p.terms.items():
        e = dict(m).get(v, 0)
        rest = mono_make([(w, k) for w, k in m if w != v])
        by_exp.setdefault(e, []).append((rest, c))
    out = RF_ZERO
    for e, parts in sorted(by_exp.items()):
        out = out + RationalFn(Poly(parts), P_ONE, _normalized=True) * (r ** e)
    return out


# ---------------------------------------------------------------------------
# SymExpr: sums of rational-function-times-exp terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    rat: RationalFn
    exp_arg: Poly


class SymExpr:
    """Canonical sum of (rational function) * exp(polynomial) terms."""

    __slots__ = ("terms",)

    def __init__(self, terms=(), _canonical=False):
        if not _canonical:
            terms = _canonical_terms(terms)
        object.__setattr__(self, "terms", tuple(terms))

    def __setattr__(self, *_):
        raise AttributeError("SymExpr is immutable")

    # -- constructors -------------------------------------------------------

    @staticmethod
    def const(c) -> "SymExpr":
        c = Fraction(c)
        if not c:
            return SX_ZERO
        return SymExpr((Term(RationalFn.const(c), P_ZERO),), _canonical=True)

    @staticmethod
    def var(v: Indeterminate, exp: int = 1) -> "SymExpr":
        return SymExpr.from_poly(Poly.var(v, exp))

    @staticmethod
    def from_poly(p: Poly) -> "SymExpr":
        if p.is_zero():
            return SX_ZERO
        return SymExpr((Term(RationalFn(p, P_ONE, _normalized=True), P_ZERO),),
                       _canonical=True)

    @staticmethod
    def from_ratfn(r: RationalFn, exp_arg: Poly = P_ZERO) -> "SymExpr":
        return SymExpr((Term(r, exp_arg),))

    @staticmethod
    def exp_of(arg: Poly) -> "SymExpr":
        return SymExpr((Term(RF_ONE, arg),))

    # -- predicates ---------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_rational(self) -> bool:
        """True when the expression carries no exp factor."""
        return all(t.exp_arg.is_zero() and not t.rat.indeterminates() & {EULER}
                   for t in self.terms) or self.is_zero()

    def single_ratfn(self):
        """The RationalFn when this is a single exp-free term, else None.

        Powers of the Euler symbol inside the rational part are permitted.
        """
        if self.is_zero():
            return RF_ZERO
        if len(self.terms) == 1 and self.terms[0].exp_arg.is_zero():
            return self.terms[0].rat
        return None

    def as_fraction(self):
        """Exact rational value when the expression is a rational constant."""
        if self.is_zero():
            return Fraction(0)
        r = self.single_ratfn()
        if r is not None:
            return r.as_constant()
        return None

    def as_float(self) -> float:
        return self.evaluate({})

    def indeterminates(self):
        s = set()
        for t in self.terms:
            s |= t.rat.indeterminates() | t.exp_arg.indeterminates()
        s.discard(EULER)
        return s

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "SymExpr") -> "SymExpr":
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        return SymExpr(self.terms + other.terms)

    def __neg__(self) -> "SymExpr":
        return SymExpr(tuple(Term(-t.rat, t.exp_arg) for t in self.terms),
                       _canonical=True)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other: "SymExpr") -> "SymExpr":
        out = []
        for a in self.terms:
            for b in other.terms:
                out.append(Term(a.rat * b.rat, a.exp_arg + b.exp_arg))
        return SymExpr(out)

    def scale(self, c) -> "SymExpr":
        c = Fraction(c)
        if not c:
            return SX_ZERO
        return SymExpr(tuple(Term(t.rat.scale(c), t.exp_arg) for t in self.terms),
                       _canonical=True)

    def __pow__(self, n: int) -> "SymExpr":
        if n < 0:
            raise ValueError("negative power of SymExpr; use divide")
        out = SX_ONE
        for _ in range(n):
            out = out * self
        return out

    def divide(self, d: "SymExpr") -> "SymExpr":
        """Division by a single purely-rational term."""
        if d.is_zero():
            raise DivisionByZero("division by zero expression")
        r = d.single_ratfn()
        if r is None:
            raise DivisorUnsupported("divisor must be a single rational term")
        return SymExpr(tuple(Term(t.rat / r, t.exp_arg) for t in self.terms))

    # -- substitution -------------------------------------------------------

    def substitute(self, v: Indeterminate, r: "SymExpr") -> "SymExpr":
        if r.is_zero():
            rterm = Term(RF_ZERO, P_ZERO)
        elif len(r.terms) == 1:
            rterm = r.terms[0]
        else:
            raise NonPolynomialExpArg(
                "substitution replacement must be a single term")
        out = SX_ZERO
        for t in self.terms:
            out = out + _term_substitute(t, v, rterm)
        for t in out.terms:
            if not _fps_invertible(t.rat.den):
                raise IllDefinedProjection(
                    f"projection substituting {v.name} is not well-defined "
                    f"(denominator {t.rat.den!r} not invertible)")
        return out

    def substitute_all(self, assignment) -> "SymExpr":
        out = self
        for v, r in assignment.items():
            out = out.substitute(v, r)
        return out

    # -- calculus -----------------------------------------------------------

    def derivative(self, v: Indeterminate, n: int = 1) -> "SymExpr":
        out = self
        for _ in range(n):
            acc = []
            for t in out.terms:
                dr = t.rat.derivative(v)
                if not dr.is_zero():
                    acc.append(Term(dr, t.exp_arg))
                de = t.exp_arg.derivative(v)
                if not de.is_zero():
                    acc.append(Term(t.rat * RationalFn(de, P_ONE, _normalized=True),
                                    t.exp_arg))
            out = SymExpr(acc)
        return out

    def taylor_coeff(self, v: Indeterminate, n: int) -> "SymExpr":
        # extracted via series inversion rather than n-fold derivatives,
        # whose intermediate denominators grow exponentially
        for t in self.terms:
            if t.rat.den.subs_value(v, Fraction(0)).is_zero():
                raise SingularAtZero(
                    f"denominator vanishes at {v.name} = 0")
        try:
            return series_expand(self, [v], n).get((n,), SX_ZERO)
        except IllDefinedProjection as exc:
            raise SingularAtZero(str(exc)) from exc

    # -- comparison / rendering ---------------------------------------------

    def eq_canonical(self, other: "SymExpr") -> bool:
        groups = {}
        for t in self.terms:
            groups[t.exp_arg] = groups.get(t.exp_arg, RF_ZERO) + t.rat
        for t in other.terms:
            groups[t.exp_arg] = groups.get(t.exp_arg, RF_ZERO) - t.rat
        return all(r.is_zero() for r in groups.values())

    def __eq__(self, other):
        if not isinstance(other, SymExpr):
            return NotImplemented
        return self.eq_canonical(other)

    def __hash__(self):
        return hash(tuple((t.rat, t.exp_arg) for t in self.terms))

    def structurally_equal(self, other: "SymExpr") -> bool:
        return (len(self.terms) == len(other.terms)
                and all(a.rat.num == b.rat.num and a.rat.den == b.rat.den
                        and a.exp_arg == b.exp_arg
                        for a, b in zip(self.terms, other.terms)))

    def evaluate(self, assignment) -> float:
        total = 0.0
        for t in self.terms:
            val = t.rat.evaluate(assignment)
            if not t.exp_arg.is_zero():
                val *= math.exp(t.exp_arg.evaluate(assignment))
            total += val
        return total

    def __repr__(self):
        return to_string(self)


SX_ZERO = SymExpr((), _canonical=True)
SX_ONE = SymExpr.const(1)


def _canonical_terms(terms):
    groups = {}
    for t in terms:
        if t.rat.is_zero():
            continue
        arg, rat = _migrate_exp_constant(t.exp_arg, t.rat)
        if arg in groups:
            groups[arg] = groups[arg] + rat
        else:
            groups[arg] = rat
    out = [Term(r, a) for a, r in groups.items() if not r.is_zero()]
    out.sort(key=lambda t: t.exp_arg.sort_token())
    return out


def _migrate_exp_constant(arg: Poly, rat: RationalFn):
    """Move integer constants out of exp arguments into Euler-symbol powers."""
    c = arg.constant_term()
    if c and c.denominator == 1:
        k = int(c)
        arg = arg - Poly.const(c)
        if k > 0:
            rat = rat * RationalFn(Poly.var(EULER, k), P_ONE, _normalized=True)
        else:
            rat = rat * RationalFn(P_ONE, Poly.var(EULER, -k), _normalized=True)
    return arg, rat


def _fps_invertible(den: Poly) -> bool:
    """Whether the denominator is invertible as a power series.

    The constant term with respect to the series indeterminates (program and
    meta kinds) must be nonzero; parameters and scalar symbols act as field
    constants.
    """
    kept = [(m, c) for m, c in den.terms.items()
            if not any(_is_series_var(v) for v, _ in m)]
    return bool(kept)


def _term_substitute(t: Term, v: Indeterminate, rterm: Term) -> SymExpr:
    rat, arg = t.rat, t.exp_arg
    if not (rat.num.contains(v) or rat.den.contains(v) or arg.contains(v)):
        return SymExpr((t,))
    if rterm.exp_arg.is_zero():
        if arg.contains(v):
            rp = rterm.rat.num if rterm.rat.den == P_ONE else None
            if rp is None:
                raise NonPolynomialExpArg(
                    f"substituting a non-polynomial into exp argument via {v.name}")
            arg = arg.subs(v, rp)
        new_rat = rat.subs(v, rterm.rat)
        return SymExpr((Term(new_rat, arg),))
    # replacement carries an exp factor: only numerator occurrences allowed
    if rat.den.contains(v) or arg.contains(v):
        raise NonPolynomialExpArg(
            f"cannot substitute an exp-bearing expression for {v.name} "
            "inside a denominator or exp argument")
    by_exp = {}
    for m, c in rat.num.terms.items():
        e = dict(m).get(v, 0)
        rest = mono_make([(w, k) for w, k in m if w != v])
        by_exp.setdefault(e, []).append((rest, c))
    parts = []
    for e, monos in by_exp.items():
        piece = RationalFn(Poly(monos), rat.den) * (rterm.rat ** e)
        parts.append(Term(piece, arg + rterm.exp_arg.scale(e)))
    return SymExpr(parts)


# ---------------------------------------------------------------------------
# Truncated multivariate series expansion
# ---------------------------------------------------------------------------


def series_expand(e: SymExpr, vars, order: int):
    """All Taylor coefficients of total degree <= order in `vars`.

    Returns a dict mapping exponent tuples (aligned with `vars`) to SymExpr
    coefficients; absent entries are zero.  Exact throughout.
    """
    vars = list(vars)
    if not vars:
        return {} if e.is_zero() else {(): e}
    out = {}
    for t in e.terms:
        e_vars, e_rest = _split_exp_arg(t.exp_arg, vars)
        sn = _poly_series(t.rat.num, vars)
        sd = _poly_series(t.rat.den, vars)
        inv = _series_invert(sd, vars, order)
        total = _series_mul(sn, inv, order)
        if e_vars:
            total = _series_mul(total, _series_exp(e_vars, vars, order), order)
        for state, rf in total.items():
            if rf.is_zero():
                continue
            piece = SymExpr.from_ratfn(rf, e_rest)
            out[state] = out.get(state, SX_ZERO) + piece
    return {s: v for s, v in out.items() if not v.is_zero()}


def _split_exp_arg(arg: Poly, vars):
    """Split exp argument into the part touching `vars` and the rest."""
    vset = set(vars)
    touching, rest = [], []
    for m, c in arg.terms.items():
        (touching if any(v in vset for v, _ in m) else rest).append((m, c))
    t = _poly_series(Poly(dict(touching)), vars) if touching else {}
    return t, Poly(dict(rest))


def _poly_series(p: Poly, vars):
    """Polynomial as a series dict: exponent tuple -> RationalFn in the rest."""
    vset = {v: i for i, v in enumerate(vars)}
    acc = {}
    for m, c in p.terms.items():
        state = [0] * len(vars)
        rest = []
        for v, e in m:
            if v in vset:
                state[vset[v]] = e
            else:
                rest.append((v, e))
        key = tuple(state)
        acc.setdefault(key, []).append((mono_make(rest), c))
    return {k: RationalFn(Poly(v), P_ONE, _normalized=True) for k, v in acc.items()}


def _states_up_to(n_vars: int, order: int):
    for total in range(order + 1):
        for cuts in itertools.combinations(range(total + n_vars - 1), n_vars - 1):
            prev = -1
            state = []
            for c in cuts:
                state.append(c - prev - 1)
                prev = c
            state.append(total + n_vars - 1 - prev - 1)
            yield tuple(state)


def _series_mul(a, b, order):
    out = {}
    for sa, ca in a.items():
        da = sum(sa)
        for sb, cb in b.items():
            if da + sum(sb) > order:
                continue
            key = tuple(x + y for x, y in zip(sa, sb))
            prod = ca * cb
            out[key] = out.get(key, RF_ZERO) + prod
    return {k: v for k, v in out.items() if not v.is_zero()}


def _series_invert(d, vars, order):
    zero = tuple([0] * len(vars))
    d0 = d.get(zero)
    if d0 is None or d0.is_zero():
        raise SingularAtZero("denominator vanishes at the expansion point")
    inv = {zero: RF_ONE / d0}
    nontrivial = {s: c for s, c in d.items() if s != zero}
    if not nontrivial:
        return inv
    for state in _states_up_to(len(vars), order):
        if state == zero:
            continue
        acc = RF_ZERO
        for s, c in nontrivial.items():
            rem = tuple(x - y for x, y in zip(state, s))
            if min(rem) < 0:
                continue
            prev = inv.get(rem)
            if prev is not None:
                acc = acc + c * prev
        if not acc.is_zero():
            inv[state] = -acc / d0
    return inv


def _series_exp(e_series, vars, order):
    zero = tuple([0] * len(vars))
    out = {zero: RF_ONE}
    power = {zero: RF_ONE}
    for k in range(1, order + 1):
        power = _series_mul(power, e_series, order)
        if not power:
            break
        inv_fact = Fraction(1, math.factorial(k))
        for s, c in power.items():
            out[s] = out.get(s, RF_ZERO) + c.scale(inv_fact)
    return {k: v for k, v in out.items() if not v.is_zero()}


# ---------------------------------------------------------------------------
# Spec-surface helper functions
# ---------------------------------------------------------------------------


def arith(op: str, a: SymExpr, b=None) -> SymExpr:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "neg":
        return -a
    if op == "scale":
        return b.scale(a) if isinstance(b, SymExpr) else a.scale(b)
    raise ValueError(f"unknown arithmetic op {op!r}")


def divide(a: SymExpr, d: SymExpr) -> SymExpr:
    return a.divide(d)


def substitute(e: SymExpr, v: Indeterminate, r: SymExpr) -> SymExpr:
    return e.substitute(v, r)


def derivative(e: SymExpr, v: Indeterminate, n: int = 1) -> SymExpr:
    return e.derivative(v, n)


def taylor_coeff(e: SymExpr, v: Indeterminate, n: int) -> SymExpr:
    return e.taylor_coeff(v, n)


def eq_canonical(a: SymExpr, b: SymExpr) -> bool:
    return a.eq_canonical(b)


# -- rendering ---------------------------------------------------------------


def to_string(e: SymExpr) -> str:
    """Render in the textual expression syntax (parseable by lang)."""
    if e.is_zero():
        return "0"
    parts = []
    for t in e.terms:
        parts.append(_term_to_str(t))
    return " + ".join(parts)


def _term_to_str(t: Term) -> str:
    rat, arg = t.rat, t.exp_arg
    # fold Euler powers back into the exp argument for display
    e_pow = 0
    num, den = rat.num, rat.den
    if num.contains(EULER):
        k = min(dict(m).get(EULER, 0) for m in num.terms)
        if all(dict(m).get(EULER, 0) == k for m in num.terms):
            num = num.divide_monomial(mono_make([(EULER, k)]))
            e_pow += k
    if den.contains(EULER):
        k = min(dict(m).get(EULER, 0) for m in den.terms)
        if all(dict(m).get(EULER, 0) == k for m in den.terms):
            den = den.divide_monomial(mono_make([(EULER, k)]))
            e_pow -= k
    arg_disp = arg + Poly.const(e_pow)
    ns = poly_to_str(num)
    if den == P_ONE:
        base = ns if len(num.terms) <= 1 else f"({ns})"
    else:
        nn = ns if len(num.terms) == 1 and not num.constant_term() < 0 else f"({ns})"
        base = f"{nn}/({poly_to_str(den)})"
    if arg_disp.is_zero():
        return base
    exp_s = f"exp({poly_to_str(arg_disp)})"
    if base == "1":
        return exp_s
    return f"{base}*{exp_s}"
