"""Quantitative queries over result generating functions.

All queries read off the distribution part of an extended power series:
moments come from derivatives evaluated at the all-ones point, event
probabilities from filtering followed by total mass, and tail bounds from
Markov's inequality.  Queries are computed on whichever series the caller
passes; conditioning first is the caller's choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from . import gf
from .gf import EFps, pvar
from .symexpr import PROGRAM, SymExpr, SX_ONE, SX_ZERO


@dataclass(frozen=True)
class Expectation:
    var: str


@dataclass(frozen=True)
class Moment:
    var: str
    k: int
    kind: str = "raw"  # raw | factorial


@dataclass(frozen=True)
class Variance:
    var: str


@dataclass(frozen=True)
class Probability:
    guard: object


@dataclass(frozen=True)
class TailBound:
    var: str
    n: int


@dataclass(frozen=True)
class Marginal:
    keep: tuple  # variable names


@dataclass(frozen=True)
class Coefficient:
    state: dict


def _at_ones(e: SymExpr) -> SymExpr:
    for ind in sorted(e.indeterminates(), key=lambda i: i.name):
        if ind.kind == PROGRAM:
            e = e.substitute(ind, SX_ONE)
    return e


def expectation(f: EFps, var: str) -> SymExpr:
    """Expected value of a variable: the first derivative at all-ones."""
    return _at_ones(f.dist.derivative(pvar(var)))


def factorial_moment(f: EFps, var: str, k: int) -> SymExpr:
    return _at_ones(f.dist.derivative(pvar(var), k))


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def moment(f: EFps, var: str, k: int, kind: str = "raw") -> SymExpr:
    """k-th moment of a variable; raw moments via Stirling conversion."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if kind == "factorial":
        return factorial_moment(f, var, k)
    if kind != "raw":
        raise ValueError(f"unknown moment kind {kind!r}")
    acc = SX_ZERO
    for j in range(k + 1):
        s = _stirling2(k, j)
        if s:
            acc = acc + factorial_moment(f, var, j).scale(Fraction(s))
    return acc


def variance(f: EFps, var: str) -> SymExpr:
    m1 = moment(f, var, 1)
    m2 = moment(f, var, 2)
    return m2 - m1 * m1


def probability(f: EFps, guard) -> SymExpr:
    """Probability of a guard event: filter, then total mass."""
    return gf.mass(gf.filter(f, guard))


def tail_bound(f: EFps, var: str, n: int) -> SymExpr:
    """Markov bound on Pr(var > n): expectation divided by n."""
    if n <= 0:
        raise ValueError("tail bound threshold must be positive")
    return expectation(f, var).scale(Fraction(1, n))


def marginal(f: EFps, keep) -> EFps:
    """Marginalize out every program variable not listed in keep."""
    keep = set(keep)
    d = f.dist
    for ind in sorted(d.indeterminates(), key=lambda i: i.name):
        if ind.kind == PROGRAM and ind.name not in keep:
            d = d.substitute(ind, SX_ONE)
    return EFps(d, f.violation, f.caveats)


def coefficient(f: EFps, state: dict) -> SymExpr:
    return gf.coefficient(f, state)


def evaluate(f: EFps, q):
    """Dispatch a query object against a result series."""
    if isinstance(q, Expectation):
        return expectation(f, q.var)
    if isinstance(q, Moment):
        return moment(f, q.var, q.k, q.kind)
    if isinstance(q, Variance):
        return variance(f, q.var)
    if isinstance(q, Probability):
        return probability(f, q.guard)
    if isinstance(q, TailBound):
        return tail_bound(f, q.var, q.n)
    if isinstance(q, Marginal):
        return marginal(f, q.keep)
    if isinstance(q, Coefficient):
        return coefficient(f, q.state)
    raise TypeError(f"not a query: {q!r}")
