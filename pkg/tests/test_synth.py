"""Parameter synthesis: constraint extraction and the rational solver."""

from fractions import Fraction

import pytest

from conftest import load
from pgfkit.equiv import Equal, check_invariant
from pgfkit.errors import FragmentError
from pgfkit.lang import While, parse
from pgfkit.symexpr import PARAMETER, Indeterminate, Poly, RationalFn
from pgfkit.synth import (
    ConstraintSystem,
    NoSolution,
    Solved,
    Unsolved,
    extract_constraints,
    solve,
    substitute_params,
    synthesize,
)


def first_loop(program):
    return next(s for s in program.body if isinstance(s, While))


def param(name):
    return Indeterminate(name, PARAMETER)


def rf_const(value):
    return RationalFn(Poly.const(Fraction(value)), Poly.const(1))


class TestExtraction:
    def test_system_mentions_only_parameters(self):
        sys = extract_constraints(first_loop(load("n_geom.pgcl")),
                                  load("n_geom_inv.pgcl"))
        assert len(sys) > 0
        for eq in sys.equations:
            assert all(i.kind == PARAMETER for i in eq.indeterminates())
        assert sys.unknowns == ("p",)

    def test_provenance_lines_up(self):
        sys = extract_constraints(first_loop(load("n_geom.pgcl")),
                                  load("n_geom_inv.pgcl"))
        assert len(sys.provenance) == len(sys.equations)
        assert "= 0" in sys.pretty()

    def test_loopy_template_rejected(self):
        loop = first_loop(load("n_geom.pgcl"))
        bad = parse("nat n; nat c;\nwhile (n > 0) { n := n - 1 }")
        with pytest.raises(FragmentError):
            extract_constraints(loop, bad)


class TestSolver:
    def test_empty_system_is_trivially_solved(self):
        out = solve(ConstraintSystem((), ()))
        assert isinstance(out, Solved)
        assert out.assignments == {}

    def test_inconsistent_constant_equation(self):
        out = solve(ConstraintSystem((Poly.const(1),), ("nowhere",)))
        assert isinstance(out, NoSolution)

    def test_linear_equation(self):
        # 2p - 1 = 0
        eq = Poly.var(param("p")).scale(2) - Poly.const(1)
        out = solve(ConstraintSystem((eq,), ("unit",)))
        assert isinstance(out, Solved)
        assert out.assignments["p"] == rf_const(Fraction(1, 2))

    def test_linear_in_terms_of_other_parameter(self):
        # 3p - q = 0 with p preferred: p = q/3
        p, q = param("p"), param("q")
        eq = Poly.var(p).scale(3) - Poly.var(q)
        out = solve(ConstraintSystem((eq,), ("unit",), unknowns=("p",)))
        assert isinstance(out, Solved)
        assert out.assignments["p"] == RationalFn(Poly.var(q), Poly.const(3))

    def test_univariate_quadratic_root(self):
        # (2p - 1)(p - 2) = 0; only p = 1/2 also satisfies 3p < 2
        p = param("p")
        quad = (Poly.var(p).scale(2) - Poly.const(1)) * (Poly.var(p) - Poly.const(2))
        other = Poly.var(p).scale(4) - Poly.const(2)
        out = solve(ConstraintSystem((quad, other), ("a", "b")))
        assert isinstance(out, Solved)
        assert out.assignments["p"] == rf_const(Fraction(1, 2))

    def test_backtracks_over_candidate_roots(self):
        # p(p - 1/3) = 0 and p - 1/3 = 0 force the nonzero root
        p = param("p")
        eq1 = Poly.var(p, 2) - Poly.var(p).scale(Fraction(1, 3))
        eq2 = Poly.var(p) - Poly.const(Fraction(1, 3))
        out = solve(ConstraintSystem((eq1, eq2), ("a", "b")))
        assert isinstance(out, Solved)
        assert out.assignments["p"] == rf_const(Fraction(1, 3))

    def test_irreducible_system_reported_unsolved(self):
        # p^2 + q^2 - 1 = 0 has no rational parametrization this solver finds
        p, q = param("p"), param("q")
        eq = Poly.var(p, 2) + Poly.var(q, 2) - Poly.const(1)
        out = solve(ConstraintSystem((eq,), ("circle",)))
        assert isinstance(out, Unsolved)
        assert len(out.residual) == 1

    def test_irrational_root_is_no_solution(self):
        # p^2 - 2 = 0 has no rational root
        eq = Poly.var(param("p"), 2) - Poly.const(2)
        out = solve(ConstraintSystem((eq,), ("unit",)))
        assert isinstance(out, (NoSolution, Unsolved))

    def test_against_brute_force_grid(self):
        # single-parameter polynomial systems checked against exhaustive
        # search over small-height rationals
        p = param("p")
        cases = [
            (Poly.var(p, 3) - Poly.var(p),),
            (Poly.var(p, 2).scale(4) - Poly.const(1),),
            (Poly.var(p, 2) + Poly.const(1),),
            (Poly.var(p).scale(6) - Poly.const(5),
             Poly.var(p, 2).scale(36) - Poly.const(25)),
        ]
        grid = sorted({Fraction(n, d)
                       for d in range(1, 13) for n in range(-12, 13)})
        for eqs in cases:
            out = solve(ConstraintSystem(eqs, tuple("m" for _ in eqs)))
            roots = [x for x in grid
                     if all(eq.subs(p, Poly.const(x)).is_zero() for eq in eqs)]
            if roots:
                assert isinstance(out, Solved)
                got = out.assignments["p"]
                assert got.num.constant_term() / got.den.constant_term() in roots
            else:
                assert not isinstance(out, Solved)


class TestEndToEnd:
    def test_symbolic_rate_recovered(self):
        loop = first_loop(load("n_geom.pgcl"))
        template = load("n_geom_inv.pgcl")
        out, sys = synthesize(loop, template)
        assert isinstance(out, Solved)
        q = param("q")
        assert out.assignments == {"p": RationalFn(Poly.var(q), Poly.const(3))}
        assert sys.unknowns == ("p",)

    def test_concrete_rate_recovered_and_reverified(self):
        loop = first_loop(load("geometric_param.pgcl"))
        template = load("geometric_param_inv.pgcl")
        out, _ = synthesize(loop, template)
        assert isinstance(out, Solved)
        assert out.assignments["r"] == rf_const(Fraction(1, 3))
        concrete = substitute_params(template, out.assignments)
        assert isinstance(check_invariant(loop, concrete), Equal)

    def test_template_parameter_preferred_over_loop_parameter(self):
        # loop uses a bare symbolic probability p; answer is r = p, not p = r
        loop = first_loop(parse("""nat c; nat x;
        while (c = 1) { { c := 0 } [p] { x := x + 1 } }"""))
        template = load("geometric_param_inv.pgcl")
        out, sys = synthesize(loop, template)
        assert isinstance(out, Solved)
        assert set(out.assignments) == {"r"}
        assert out.assignments["r"] == RationalFn(
            Poly.var(param("p")), Poly.const(1))

    def test_wrong_template_shape_has_no_solution(self):
        # template adds a constant instead of an iid batch
        loop = first_loop(load("geometric_param.pgcl"))
        bad = parse("""nat c; nat x;
        if (c = 1) { { x := x + 1 } [r] { skip }; c := 0 }""")
        out, _ = synthesize(loop, bad)
        assert not isinstance(out, Solved)


class TestSubstitution:
    def test_constant_assignment_yields_fraction_probability(self):
        template = load("geometric_param_inv.pgcl")
        concrete = substitute_params(template, {"r": rf_const(Fraction(1, 3))})
        import re

        from pgfkit.lang import pretty_print

        text = pretty_print(concrete)
        assert "1/3" in text
        assert re.search(r"\br\b", text) is None
