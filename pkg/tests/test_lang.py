"""Parser, pretty-printer, and fragment validation tests."""

from fractions import Fraction

import pytest

from pgfkit import lang
from pgfkit.errors import ParseError
from pgfkit.gf import GTrue, VarCmpConst, VarCmpVar, VarModConst
from pgfkit.lang import (
    Assign,
    IidIncr,
    Observe,
    PChoice,
    Sample,
    Skip,
    While,
    classify_assignment,
    parse,
    pretty_print,
    validate,
)


class TestParsing:
    def test_declarations_then_discovery_order(self):
        p = parse("nat b;\na := 1; c := 2; b := 3")
        assert p.decls == ("b", "a", "c")

    def test_statements_and_guards(self):
        p = parse("""
        nat x; nat y;
        x := uniform(1, 6);
        observe(x % 2 = 0);
        if (x < 3) { y := y + 1 } else { skip };
        while (x > 0) { x := x - 1 }
        """)
        assert isinstance(p.body[0], Sample)
        assert p.body[1] == Observe(VarModConst("x", 0, 2))
        assert p.body[3].guard == VarCmpConst("x", ">", 0)

    def test_optional_semicolon_before_closing_brace(self):
        p = parse("nat x;\n{ x := 1 } [1/2] { observe(false) }")
        assert isinstance(p.body[0], PChoice)
        assert p.body[0].prob == Fraction(1, 2)

    def test_diverge_is_an_infinite_skip_loop(self):
        p = parse("nat x;\ndiverge")
        (w,) = p.body
        assert isinstance(w, While)
        assert w.guard == GTrue()
        assert w.body == (Skip(),)

    def test_primed_identifiers(self):
        p = parse("nat b1';\nb1' := 1; observe(b1' = b1')")
        assert p.body[0].var == "b1'"
        assert p.body[1].guard == VarCmpVar("b1'", "=", "b1'")

    def test_compound_guards(self):
        p = parse("nat a; nat b;\nwhile (!(a = 0 && b = 0)) { a := a - 1 }")
        g = p.body[0].guard
        assert "Not" in type(g).__name__

    def test_symbolic_probability(self):
        p = parse("nat n;\n{ n := 0 } [q/3] { n := n + 1 }")
        prob = p.body[0].prob
        assert not isinstance(prob, (Fraction, str))  # scaled parameter

    def test_parse_error_carries_location(self):
        with pytest.raises(ParseError) as exc:
            parse("nat x;\nx := ;")
        assert exc.value.line == 2

    def test_unknown_distribution_rejected(self):
        with pytest.raises(ParseError):
            parse("nat x;\nx := zeta(2)")

    def test_distribution_arity_checked(self):
        with pytest.raises(ParseError):
            parse("nat x;\nx := uniform(3)")

    def test_probability_range_checked(self):
        with pytest.raises(ParseError):
            parse("nat x;\n{ x := 1 } [3/2] { skip }")

    def test_comments_are_ignored(self):
        p = parse("// a counter\nnat x;\nx := 1 // set it\n")
        assert p.body == (Assign("x", lang.Const(1)),)


class TestPrettyPrint:
    def test_round_trip(self, programs_dir):
        for path in sorted(programs_dir.glob("*.pgcl")):
            p = parse(path.read_text())
            again = parse(pretty_print(p))
            assert again.body == p.body, path.name
            assert set(again.decls) == set(p.decls)


class TestClassifyAssignment:
    def test_supported_forms(self):
        p = parse("""
        nat x; nat y;
        x := 4; x := x + 2; x := x - 1; x := x + y; x := y
        """)
        tags = [classify_assignment(s)[0] for s in p.body]
        assert tags == ["const", "incr", "decr", "addvar", "copy"]

    def test_unsupported_forms(self):
        p = parse("nat x; nat y;\nx := y + 1")
        assert classify_assignment(p.body[0]) is None


class TestValidate:
    def test_loop_free_credip(self):
        rep = validate(parse("nat x;\nx := geometric(1/2); observe(x < 5)"))
        assert rep.loop_free and rep.credip

    def test_loop_detection(self):
        rep = validate(parse("nat x;\nwhile (x > 0) { x := x - 1 }"))
        assert not rep.loop_free and rep.credip

    def test_non_rectangular_guard_flagged(self):
        rep = validate(parse("nat a; nat b;\nobserve(a = b)"))
        assert not rep.credip
        assert rep.unsupported

    def test_modulus_other_than_two_flagged(self):
        rep = validate(parse("nat x;\nobserve(x % 3 = 1)"))
        assert not rep.credip

    def test_general_assignment_flagged(self):
        rep = validate(parse("nat x; nat y;\nx := y + 2"))
        assert not rep.credip


class TestParseExpr:
    def test_program_indeterminates(self):
        e = lang.parse_expr("3*t/(4 - t^2)")
        (ind,) = e.indeterminates()
        assert ind.name == "t"

    def test_parameters_by_listing(self):
        e = lang.parse_expr("p*x", parameters=("p",))
        kinds = {i.name: i.kind for i in e.indeterminates()}
        assert kinds["p"] == "parameter"
        assert kinds["x"] == "program"

    def test_exp_requires_polynomial_argument(self):
        with pytest.raises(ParseError):
            lang.parse_expr("exp(1/(1 - x))")


class TestParseGuard:
    def test_standalone_guard(self):
        g = lang.parse_guard("t % 2 = 1")
        assert g == VarModConst("t", 1, 2)

    def test_trailing_garbage_rejected(self):
        with pytest.raises(ParseError):
            lang.parse_guard("x = 1 extra")
