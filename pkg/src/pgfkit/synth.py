"""Parameter synthesis for template invariants.

A template is a loop-free program whose choice probabilities or distribution
parameters are symbolic.  The template is an invariant of a loop exactly when
it equals its own one-step unfolding on the universal second-order input, and
for purely rational closed forms F/H and F_hat/H_hat that equality reduces to
the polynomial identity F*H_hat - F_hat*H = 0.  Collecting the coefficient of
every non-parameter monomial yields a finite system of polynomial equations
over the parameters alone; a restricted solver discharges the systems arising
from the supported benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from . import equiv, lang, semantics
from .errors import FragmentError, NonRationalClosedForm
from .gf import EFps
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
    program_of,
)
from .symexpr import (
    PARAMETER,
    Indeterminate,
    Poly,
    RationalFn,
    SymExpr,
    _MONO_KEY,
    _poly_subs_rf,
    mono_make,
    poly_to_str,
)

MAX_ROOT_HEIGHT = 64


@dataclass(frozen=True)
class ConstraintSystem:
    equations: tuple  # of Poly over parameter indeterminates only
    provenance: tuple  # matching description of the originating monomial
    unknowns: tuple = ()  # template parameters, solved for preferentially

    def __len__(self):
        return len(self.equations)

    def pretty(self):
        lines = []
        for eq, src in zip(self.equations, self.provenance):
            lines.append(f"{poly_to_str(eq)} = 0    (from {src})")
        return "\n".join(lines) if lines else "(empty system)"


@dataclass(frozen=True)
class Solved:
    assignments: dict  # param name -> SymExpr over remaining params
    outcome = "solved"


@dataclass(frozen=True)
class NoSolution:
    outcome = "no-solution"


@dataclass(frozen=True)
class Unsolved:
    residual: ConstraintSystem
    outcome = "unsolved"


# ---------------------------------------------------------------------------
# Constraint extraction
# ---------------------------------------------------------------------------


def extract_constraints(loop: While, template: Program) -> ConstraintSystem:
    """Equations over the template parameters equivalent to invariance."""
    rep = lang.validate(template)
    if not rep.loop_free or not rep.credip:
        reasons = "; ".join(r for _, r in rep.unsupported) or "contains a loop"
        raise FragmentError(f"template outside the decidable fragment: {reasons}")
    unfold = program_of(
        (IfElse(loop.guard, tuple(loop.body) + tuple(template.body), (Skip(),)),),
        decls=template.decls)
    variables = list(template.decls)
    for v in unfold.decls:
        if v not in variables:
            variables.append(v)
    so = equiv.build_second_order(variables)
    ft = semantics.transform(template, so.efps).efps
    fu = semantics.transform(unfold, so.efps).efps
    equations = []
    provenance = []
    for label, a, b in (("dist", ft.dist, fu.dist),
                        ("violation", ft.violation, fu.violation)):
        _cross_difference(a, b, label, equations, provenance)
    return ConstraintSystem(tuple(equations), tuple(provenance),
                            tuple(_template_params(template)))


def _template_params(template: Program):
    names = []

    def note(p):
        if isinstance(p, str) and p not in names:
            names.append(p)
        elif isinstance(p, Poly):
            for ind in p.indeterminates():
                if ind.kind == PARAMETER and ind.name not in names:
                    names.append(ind.name)

    def walk(stmts):
        for s in stmts:
            if isinstance(s, PChoice):
                note(s.prob)
                walk(s.left)
                walk(s.right)
            elif isinstance(s, (Sample, IidIncr)):
                for p in s.dist.params:
                    note(p)
            elif isinstance(s, IfElse):
                walk(s.then)
                walk(s.els)
            elif isinstance(s, While):
                walk(s.body)

    walk(template.body)
    return names


def _single_rational(e: SymExpr, label: str) -> RationalFn:
    rf = e.single_ratfn()
    if rf is None:
        raise NonRationalClosedForm(
            f"{label} closed form is not purely rational; constraint "
            "extraction needs exp-free results")
    return rf


def _cross_difference(a: SymExpr, b: SymExpr, label, equations, provenance):
    ra = _single_rational(a, label)
    rb = _single_rational(b, label)
    d = ra.num * rb.den - rb.num * ra.den
    grouped = {}
    for mono, c in d.terms.items():
        base = []
        param = []
        for ind, e in mono:
            (param if ind.kind == PARAMETER else base).append((ind, e))
        key = mono_make(base)
        grouped.setdefault(key, Poly())
        grouped[key] = grouped[key] + Poly({mono_make(param): c})
    for key in sorted(grouped, key=_MONO_KEY):
        eq = grouped[key]
        if eq.is_zero():
            continue
        mono_str = poly_to_str(Poly({key: Fraction(1)}))
        tag = mono_str if label == "dist" else f"{mono_str}*!"
        equations.append(eq)
        provenance.append(tag)


# ---------------------------------------------------------------------------
# Restricted solver
# ---------------------------------------------------------------------------


def solve(sys: ConstraintSystem):
    """Discharge a constraint system by substitution and rational roots.

    Strategy, iterated to fixpoint with backtracking over root choices:
    equations linear in one parameter with a constant leading coefficient are
    substituted away; univariate equations are solved by rational-root search.
    """
    outcome = _solve_rec(list(sys.equations), list(sys.provenance), {},
                         tuple(sys.unknowns))
    if isinstance(outcome, Solved):
        verified = _verify(sys.equations, outcome.assignments)
        if not verified:
            return Unsolved(sys)
    return outcome


def _params_of(p: Poly):
    return sorted({i for i in p.indeterminates() if i.kind == PARAMETER},
                  key=lambda i: i.name)


def _solve_rec(equations, provenance, assignments, unknowns=()):
    equations = list(equations)
    provenance = list(provenance)
    changed = True
    while changed:
        changed = False
        keep_eq, keep_src = [], []
        for eq, src in zip(equations, provenance):
            if eq.is_zero():
                continue
            if not _params_of(eq):
                return NoSolution()
            keep_eq.append(eq)
            keep_src.append(src)
        equations, provenance = keep_eq, keep_src
        if not equations:
            return Solved(dict(assignments))
        sub = _find_linear(equations, unknowns)
        if sub is not None:
            var, value = sub
            equations = [_substitute(eq, var, value) for eq in equations]
            assignments = _record(assignments, var, value)
            changed = True
            continue
        branch = _find_univariate(equations)
        if branch is not None:
            var, roots = branch
            for r in roots:
                value = RationalFn(Poly.const(r), Poly.const(1))
                eqs2 = [_substitute(eq, var, value) for eq in equations]
                out = _solve_rec(eqs2, provenance,
                                 _record(assignments, var, value), unknowns)
                if isinstance(out, Solved):
                    return out
            return NoSolution()
    return Unsolved(ConstraintSystem(tuple(equations), tuple(provenance)))


def _record(assignments, var, value: RationalFn):
    new = {k: _rf_subs(v, var, value) for k, v in assignments.items()}
    new[var.name] = value
    return new


def _rf_subs(rf: RationalFn, var, value: RationalFn) -> RationalFn:
    num = _poly_subs_rf(rf.num, var, value)
    den = _poly_subs_rf(rf.den, var, value)
    return num / den


def _substitute(eq: Poly, var, value: RationalFn) -> Poly:
    return _poly_subs_rf(eq, var, value).num


def _find_linear(equations, unknowns=()):
    """An equation of the form c*p + rest with c a nonzero constant.

    Template parameters (the declared unknowns) are tried before free
    parameters of the loop, so solutions are expressed in terms of the
    latter.
    """
    for eq in equations:
        ordered = sorted(_params_of(eq),
                         key=lambda i: (i.name not in unknowns, i.name))
        for var in ordered:
            coeff = Poly()
            rest = Poly()
            degree_ok = True
            for mono, c in eq.terms.items():
                d = dict(mono).get(var, 0)
                if d == 0:
                    rest = rest + Poly({mono: c})
                elif d == 1:
                    reduced = mono_make([(i, e) for i, e in mono if i != var])
                    coeff = coeff + Poly({reduced: c})
                else:
                    degree_ok = False
                    break
            if not degree_ok:
                continue
            if coeff.is_constant() and not coeff.is_zero():
                c0 = coeff.constant_term()
                return var, RationalFn(rest.scale(Fraction(-1, 1)),
                                       Poly.const(c0))
    return None


def _find_univariate(equations):
    for eq in equations:
        params = _params_of(eq)
        if len(params) != 1:
            continue
        var = params[0]
        roots = _rational_roots(eq, var)
        return var, roots
    return None


def _rational_roots(eq: Poly, var: Indeterminate):
    """All rational roots of a univariate polynomial, by the root theorem."""
    coeffs = {}
    for mono, c in eq.terms.items():
        coeffs[dict(mono).get(var, 0)] = coeffs.get(dict(mono).get(var, 0), 0) + c
    deg = max(coeffs)
    lcm = 1
    for c in coeffs.values():
        lcm = lcm * c.denominator // _gcd(lcm, c.denominator)
    ints = {d: int(c * lcm) for d, c in coeffs.items()}
    # factor out var^k so the constant term is nonzero
    low = min(d for d, c in ints.items() if c)
    shifted = {d - low: c for d, c in ints.items() if c}
    roots = [Fraction(0)] if low > 0 else []
    a0, an = shifted.get(0, 0), shifted[max(shifted)]
    if a0 == 0:
        return roots
    for p in _divisors(abs(a0)):
        for q in _divisors(abs(an)):
            if p > MAX_ROOT_HEIGHT * q and q > MAX_ROOT_HEIGHT:
                continue
            for cand in (Fraction(p, q), Fraction(-p, q)):
                if _poly_eval_univ(shifted, cand) == 0 and cand not in roots:
                    roots.append(cand)
    roots.sort()
    return roots


def _poly_eval_univ(coeffs, x: Fraction) -> Fraction:
    return sum((c * x ** d for d, c in coeffs.items()), Fraction(0))


def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def _divisors(n: int):
    out = []
    d = 1
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            if d != n // d:
                out.append(n // d)
        d += 1
    return sorted(out)


def _verify(equations, assignments) -> bool:
    for eq in equations:
        rf = RationalFn(eq, Poly.const(1))
        for name, value in assignments.items():
            rf = _rf_subs(rf, Indeterminate(name, PARAMETER), value)
        if not rf.is_zero():
            return False
    return True


# ---------------------------------------------------------------------------
# Template instantiation
# ---------------------------------------------------------------------------


def _resolve_param(value, assignments):
    if not isinstance(value, str) or value not in assignments:
        return value
    rf = assignments[value]
    if rf.den.is_constant() and rf.num.is_constant():
        return rf.num.constant_term() / rf.den.constant_term()
    if rf.den.is_constant():
        c = rf.den.constant_term()
        return rf.num.scale(Fraction(1) / c)
    raise ValueError(f"parameter {value!r} resolved to a non-polynomial value")


def substitute_params(program: Program, assignments) -> Program:
    """Instantiate a template with solved parameter values.

    Values that still mention other parameters become polynomial parameter
    expressions; fully numeric values become plain fractions.
    """
    body = tuple(_subst_stmt(s, assignments) for s in program.body)
    return Program(program.decls, body)


def _subst_stmt(s, assignments):
    if isinstance(s, PChoice):
        return replace(s, prob=_resolve_param(s.prob, assignments),
                       left=tuple(_subst_stmt(x, assignments) for x in s.left),
                       right=tuple(_subst_stmt(x, assignments) for x in s.right))
    if isinstance(s, (Sample, IidIncr)):
        d = s.dist
        params = tuple(_resolve_param(p, assignments) for p in d.params)
        return replace(s, dist=DistLiteral(d.kind, params))
    if isinstance(s, IfElse):
        return replace(s, then=tuple(_subst_stmt(x, assignments) for x in s.then),
                       els=tuple(_subst_stmt(x, assignments) for x in s.els))
    if isinstance(s, While):
        return replace(s, body=tuple(_subst_stmt(x, assignments) for x in s.body))
    if isinstance(s, (Skip, Observe, Assign)):
        return s
    raise TypeError(f"not a statement: {s!r}")


def synthesize(loop: While, template: Program):
    """End-to-end synthesis: extract, solve, and report."""
    sys = extract_constraints(loop, template)
    return solve(sys), sys
