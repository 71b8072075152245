"""Randomized algebraic properties of the transformer and its back-ends.

Programs drawn here stay tiny (two variables, shallow nesting) so every
suite finishes quickly while still exercising each statement rule.
"""

from fractions import Fraction

from hypothesis import given, settings, strategies as st

from pgfkit import gf, semantics
from pgfkit.equiv import Equal, NotEqual, build_second_order, check_equiv
from pgfkit.gf import (
    EFps,
    GAnd,
    GNot,
    GOr,
    VarCmpConst,
    VarModConst,
    coefficient,
    filter as gfilter,
    guard_eval,
    guard_negate,
    mass,
    pvar,
)
from pgfkit.lang import (
    Assign,
    BinOp,
    Const,
    DistLiteral,
    IfElse,
    Observe,
    PChoice,
    Sample,
    Skip,
    VarRef,
    While,
    program_of,
)
from pgfkit.semantics import Unroll, transform
from pgfkit.symexpr import (
    Poly,
    RationalFn,
    SymExpr,
    eq_canonical,
    series_expand,
)

VARS = ("x", "y")

# deterministic generation keeps the suite's runtime stable run to run
SLOW = settings(max_examples=200, deadline=None, derandomize=True)


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------

variables = st.sampled_from(VARS)
small_nat = st.integers(min_value=0, max_value=3)
probs = st.sampled_from([Fraction(1, 2), Fraction(1, 3), Fraction(2, 3),
                         Fraction(1, 4), Fraction(3, 4)])


@st.composite
def guards(draw):
    kind = draw(st.integers(0, 3))
    v = draw(variables)
    if kind == 0:
        op = draw(st.sampled_from(["<", "<=", "=", ">", ">="]))
        return VarCmpConst(v, op, draw(small_nat))
    if kind == 1:
        return VarModConst(v, draw(st.integers(0, 1)), 2)
    a = VarCmpConst(v, draw(st.sampled_from(["<", "="])), draw(small_nat))
    b = VarCmpConst(draw(variables), ">", draw(small_nat))
    return GAnd(a, b) if kind == 2 else GOr(a, GNot(b))


@st.composite
def dists(draw):
    kind = draw(st.integers(0, 3))
    if kind == 0:
        return DistLiteral("bernoulli", (draw(probs),))
    if kind == 1:
        lo = draw(st.integers(0, 2))
        return DistLiteral("uniform", (lo, lo + draw(st.integers(1, 2))))
    if kind == 2:
        return DistLiteral("geometric", (draw(probs),))
    return DistLiteral("dirac", (draw(small_nat),))


@st.composite
def statements(draw, depth, allow_observe=True):
    top = 6 if depth <= 0 else 8
    kind = draw(st.integers(0, top if allow_observe else top - 1))
    v = draw(variables)
    if kind == 0:
        return Skip()
    if kind == 1:
        return Assign(v, Const(draw(small_nat)))
    if kind == 2:
        op = draw(st.sampled_from(["+", "-"]))
        return Assign(v, BinOp(op, VarRef(v), Const(draw(st.integers(1, 2)))))
    if kind == 3:
        return Assign(v, VarRef(draw(variables)))
    if kind == 4:
        other = VARS[0] if v == VARS[1] else VARS[1]
        return Assign(v, BinOp("+", VarRef(v), VarRef(other)))
    if kind == 5:
        return Sample(v, draw(dists()))
    if kind == 6:
        return Observe(draw(guards()))
    if kind == 7:
        return PChoice(draw(bodies(depth - 1, allow_observe)), draw(probs),
                       draw(bodies(depth - 1, allow_observe)))
    return IfElse(draw(guards()), draw(bodies(depth - 1, allow_observe)),
                  draw(bodies(depth - 1, allow_observe)))


@st.composite
def bodies(draw, depth, allow_observe=True):
    n = draw(st.integers(1, 2))
    return tuple(draw(statements(depth, allow_observe)) for _ in range(n))


@st.composite
def loop_free_programs(draw, allow_observe=True):
    return program_of(draw(bodies(2, allow_observe)), decls=VARS)


@st.composite
def simple_guards(draw):
    v = draw(variables)
    op = draw(st.sampled_from(["<", "<=", "=", ">"]))
    return VarCmpConst(v, op, draw(st.integers(0, 2)))


@st.composite
def simple_statements(draw):
    kind = draw(st.integers(0, 6))
    v = draw(variables)
    if kind == 0:
        return Assign(v, Const(draw(small_nat)))
    if kind == 1:
        op = draw(st.sampled_from(["+", "-"]))
        return Assign(v, BinOp(op, VarRef(v), Const(1)))
    if kind == 2:
        return Assign(v, VarRef(draw(variables)))
    if kind == 3:
        d = draw(st.sampled_from([
            DistLiteral("bernoulli", (Fraction(1, 2),)),
            DistLiteral("dirac", (1,)),
        ]))
        return Sample(v, d)
    if kind == 4:
        return Observe(draw(simple_guards()))
    if kind == 5:
        return IfElse(draw(simple_guards()),
                      (Assign(v, Const(draw(small_nat))),), (Skip(),))
    return PChoice((Assign(v, BinOp("+", VarRef(v), Const(1))),),
                   draw(probs), (Skip(),))


@st.composite
def simple_programs(draw, max_len=2):
    """Shallow polynomial-state programs, cheap to run on the
    second-order generating function."""
    n = draw(st.integers(1, max_len))
    return program_of(tuple(draw(simple_statements()) for _ in range(n)),
                      decls=VARS)


@st.composite
def priors(draw):
    states = draw(st.lists(
        st.tuples(small_nat, small_nat), min_size=1, max_size=3, unique=True))
    weights = [draw(st.integers(1, 4)) for _ in states]
    total = sum(weights)
    acc = EFps(SymExpr.const(0))
    for (a, b), w in zip(states, weights):
        acc = acc + EFps.dirac({"x": a, "y": b}).scale(Fraction(w, total))
    return acc


@st.composite
def decreasing_loops(draw):
    """Loops that strictly shrink x on every path, so they terminate."""
    v = "x"
    dec = Assign(v, BinOp("-", VarRef(v), Const(1)))
    extra = draw(statements(0, allow_observe=False))
    body = (dec, extra) if draw(st.booleans()) else (extra, dec)
    guard = VarCmpConst(v, ">", draw(st.integers(0, 1)))
    return program_of((While(guard, body),), decls=VARS)


@st.composite
def rational_exprs(draw):
    def small_poly(max_terms, lo=-3, hi=3):
        acc = Poly()
        for _ in range(draw(st.integers(1, max_terms))):
            c = draw(st.integers(lo, hi).filter(lambda n: n != 0))
            acc = acc + Poly.var(pvar("x"), draw(st.integers(0, 2))).scale(c)
        return acc

    num = small_poly(2)
    den = small_poly(2)
    if den.is_zero() or not den.constant_term():
        den = den + Poly.const(draw(st.integers(1, 3)))
    return SymExpr.from_ratfn(RationalFn(num, den))


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------


class TestLoopFreeTransformer:
    @SLOW
    @given(loop_free_programs(), priors(), priors())
    def test_linearity(self, p, f, g):
        mix = f.scale(Fraction(1, 3)) + g.scale(Fraction(2, 3))
        lhs = transform(p, mix).efps
        rhs = transform(p, f).efps.scale(Fraction(1, 3)) + \
            transform(p, g).efps.scale(Fraction(2, 3))
        assert lhs == rhs

    @SLOW
    @given(loop_free_programs(), priors(), probs)
    def test_violation_passes_through_additively(self, p, f, v):
        shifted = f.with_violation(f.violation + SymExpr.const(v))
        base = transform(p, f).efps
        out = transform(p, shifted).efps
        assert out.dist == base.dist
        assert out.violation == base.violation + SymExpr.const(v)

    @SLOW
    @given(loop_free_programs(), priors())
    def test_mass_conservation(self, p, f):
        out = transform(p, f).efps
        before = mass(f) + f.violation
        after = mass(out) + out.violation
        assert eq_canonical(after, before)


class TestFilterProperties:
    @SLOW
    @given(loop_free_programs(allow_observe=False), guards())
    def test_decomposition(self, p, g):
        f = transform(p, EFps.unit()).efps
        kept = gfilter(f, g)
        dropped = gfilter(f, guard_negate(g))
        assert kept.dist + dropped.dist == f.dist

    @SLOW
    @given(loop_free_programs(allow_observe=False), guards(),
           st.tuples(small_nat, small_nat))
    def test_pointwise_agreement_with_guard_eval(self, p, g, state):
        f = transform(p, EFps.unit()).efps
        s = {"x": state[0], "y": state[1]}
        c = coefficient(f, s)
        kept_c = coefficient(gfilter(f, g), s)
        if guard_eval(g, s):
            assert kept_c == c
        else:
            assert kept_c.as_fraction() == 0


class TestLoopProperties:
    @SLOW
    @given(decreasing_loops(), st.integers(1, 4))
    def test_unrolling_is_monotone(self, p, k):
        prior = EFps.dirac({"x": 3, "y": 1})
        small = transform(p, prior, Unroll(max_iters=k)).efps
        big = transform(p, prior, Unroll(max_iters=k + 1)).efps
        assert gf.series_leq(small, big, 8)

    @SLOW
    @given(decreasing_loops(), st.integers(1, 3))
    def test_one_step_unfolding(self, p, k):
        (loop,) = p.body
        prior = EFps.dirac({"x": 2, "y": 1})
        whole = transform(p, prior, Unroll(max_iters=k)).efps
        done = gfilter(prior, guard_negate(loop.guard))
        stepped = transform(program_of(loop.body, decls=VARS),
                            gfilter(prior, loop.guard)
                            .with_violation(SymExpr.const(0))).efps
        rest = transform(p, EFps(stepped.dist),
                         Unroll(max_iters=k - 1)).efps
        expect_dist = done.dist + rest.dist
        expect_viol = prior.violation + stepped.violation + rest.violation
        assert whole.dist == expect_dist
        assert whole.violation == expect_viol


class TestEquivalenceProperties:
    @SLOW
    @given(simple_programs(), st.tuples(st.integers(0, 2), st.integers(0, 2)))
    def test_second_order_slices_are_dirac_transforms(self, p, state):
        so = build_second_order(VARS)
        out = transform(p, so.efps).efps
        metas = [u for (_, _, u) in so.pairing]
        coeffs = series_expand(out.dist, metas, sum(state))
        got = coeffs.get(tuple(state), SymExpr.const(0))
        direct = transform(
            p, EFps.dirac(dict(zip(VARS, state)))).efps
        assert eq_canonical(got, direct.dist)

    @SLOW
    @given(simple_programs(max_len=1), simple_programs(max_len=1))
    def test_verdicts_are_sound(self, p, q):
        v = check_equiv(p, q)
        if isinstance(v, NotEqual):
            init = EFps.dirac(v.counterexample)
            assert transform(p, init).efps != transform(q, init).efps
        elif isinstance(v, Equal):
            for state in ((0, 0), (1, 2), (3, 1)):
                init = EFps.dirac(dict(zip(VARS, state)))
                assert transform(p, init).efps == transform(q, init).efps


class TestSymbolicKernel:
    @SLOW
    @given(rational_exprs(), rational_exprs())
    def test_eq_canonical_matches_series_oracle(self, a, b):
        x = pvar("x")
        # degree bounds in the generator make order 10 a deciding prefix
        sa = series_expand(a, [x], 10)
        sb = series_expand(b, [x], 10)
        same_series = all(
            sa.get((n,), SymExpr.const(0)).as_fraction() ==
            sb.get((n,), SymExpr.const(0)).as_fraction()
            for n in range(11))
        assert eq_canonical(a, b) == same_series
