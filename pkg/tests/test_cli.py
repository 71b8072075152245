"""Command-line interface: output shapes, exit codes, and artifacts."""

import io
import json

import pytest

from pgfkit.cli import run


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def prog(name):
    import pathlib

    return str(pathlib.Path(__file__).parent / "programs" / name)


class TestInfer:
    def test_posterior_text_report(self):
        code, out, _ = invoke("infer", prog("even_die.pgcl"))
        assert code == 0
        assert "closed form:" in out
        assert "violation probability: 0" in out
        assert "x=2\t1/3" in out

    def test_unconditioned_keeps_violation(self):
        code, out, _ = invoke("infer", prog("even_die.pgcl"),
                              "--unconditioned")
        assert code == 0
        assert "violation probability: 1/2" in out
        assert "x=2\t1/6" in out

    def test_json_payload(self):
        code, out, _ = invoke("infer", prog("even_die.pgcl"), "--json")
        assert code == 0
        payload = json.loads(out)
        assert set(payload) >= {"closed_form", "series",
                                "violation_probability", "residual_mass",
                                "converged", "caveats"}
        assert payload["converged"] is True

    def test_invariant_strategy_with_queries(self):
        code, out, _ = invoke(
            "infer", prog("odd_geo.pgcl"),
            "--invariant", prog("odd_geo_inv.pgcl"), "--assert-uast",
            "--query", "E[t]", "--query", "Tail[t, 100]")
        assert code == 0
        assert "E[t] = 5/3" in out
        assert "Tail[t, 100] = 1/60" in out

    def test_order_flag_controls_series(self):
        code, out, _ = invoke("infer", prog("even_die.pgcl"), "--order", "3")
        assert code == 0
        assert "series (order 3):" in out
        assert "x=4" not in out

    def test_order_env_var_sets_default(self, monkeypatch):
        monkeypatch.setenv("PGFKIT_SERIES_ORDER", "2")
        code, out, _ = invoke("infer", prog("even_die.pgcl"))
        assert code == 0
        assert "series (order 2):" in out

    def test_artifacts_written(self, tmp_path):
        csv_path = tmp_path / "series.csv"
        png_path = tmp_path / "series.png"
        code, _, _ = invoke("infer", prog("even_die.pgcl"),
                            "--csv", str(csv_path), "--plot", str(png_path))
        assert code == 0
        assert csv_path.read_text().startswith("state,probability,value")
        assert png_path.stat().st_size > 0

    def test_divergent_conditioning_is_exit_4(self):
        code, _, err = invoke("infer", prog("div_obsfail.pgcl"),
                              "--invariant", prog("div_obsfail_inv.pgcl"))
        assert code == 4
        assert "undefined" in err


class TestUsageErrors:
    def test_missing_file(self):
        code, _, err = invoke("infer", "no-such-file.pgcl")
        assert code == 1
        assert "cannot read" in err

    def test_parse_error_in_program(self, tmp_path):
        bad = tmp_path / "bad.pgcl"
        bad.write_text("nat x;\nx := ;")
        code, _, err = invoke("infer", str(bad))
        assert code == 1

    def test_malformed_query(self):
        code, _, err = invoke("infer", prog("even_die.pgcl"),
                              "--query", "Median[x]")
        assert code == 1
        assert "query" in err

    def test_unknown_subcommand(self):
        code, _, _ = invoke("frobnicate")
        assert code == 1


class TestEquivAndInvariant:
    def test_equivalent_programs(self, tmp_path):
        a = tmp_path / "a.pgcl"
        b = tmp_path / "b.pgcl"
        a.write_text("nat x;\nx := 1; x := x + 1")
        b.write_text("nat x;\nx := 2")
        code, out, _ = invoke("check-equiv", str(a), str(b))
        assert code == 0
        assert "equivalent" in out

    def test_inequivalent_is_exit_3(self, tmp_path):
        a = tmp_path / "a.pgcl"
        b = tmp_path / "b.pgcl"
        a.write_text("nat x;\nx := 1")
        b.write_text("nat x;\nx := 2")
        code, out, _ = invoke("check-equiv", str(a), str(b))
        assert code == 3
        assert "counterexample" in out

    def test_loopy_input_is_exit_2(self, tmp_path):
        b = tmp_path / "b.pgcl"
        b.write_text("nat t; nat h;\nh := 0")
        code, _, err = invoke("check-equiv", prog("odd_geo.pgcl"), str(b))
        assert code == 2
        assert "fragment" in err

    def test_invariant_verified(self):
        code, out, _ = invoke("check-invariant", prog("odd_geo.pgcl"),
                              "--invariant", prog("odd_geo_inv.pgcl"))
        assert code == 0
        assert "verified" in out

    def test_invariant_rejected(self, tmp_path):
        bad = tmp_path / "bad_inv.pgcl"
        bad.write_text("nat t; nat h;\n"
                       "if (h = 1) { t += iid(geometric(1/3), h); h := 0 }")
        code, out, _ = invoke("check-invariant", prog("odd_geo.pgcl"),
                              "--invariant", str(bad))
        assert code == 3
        assert "rejected" in out


class TestSynthesize:
    def test_solved(self):
        code, out, _ = invoke("synthesize", prog("n_geom.pgcl"),
                              "--template", prog("n_geom_inv.pgcl"))
        assert code == 0
        assert "p = q/3" in out

    def test_solved_json(self):
        code, out, _ = invoke("synthesize", prog("n_geom.pgcl"),
                              "--template", prog("n_geom_inv.pgcl"), "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["outcome"] == "solved"
        assert payload["assignments"] == {"p": "q/3"}

    def test_unsolvable_template_is_exit_5(self, tmp_path):
        bad = tmp_path / "bad_tpl.pgcl"
        bad.write_text("nat c; nat x;\n"
                       "if (c = 1) { { x := x + 1 } [r] { skip }; c := 0 }")
        code, _, _ = invoke("synthesize", prog("geometric_param.pgcl"),
                            "--template", str(bad))
        assert code == 5


class TestMcCheck:
    def test_pass_with_artifacts(self, tmp_path):
        csv_path = tmp_path / "mc.csv"
        png_path = tmp_path / "mc.png"
        code, out, _ = invoke("mc-check", prog("trunc_geo.pgcl"),
                              "--prior", "y", "--samples", "20000",
                              "--csv", str(csv_path), "--plot", str(png_path))
        assert code == 0
        assert "PASS" in out
        assert csv_path.exists() and png_path.stat().st_size > 0

    def test_json_report(self):
        code, out, _ = invoke("mc-check", prog("even_die.pgcl"),
                              "--samples", "20000", "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["passed"] is True
        assert 0.45 < payload["violated_rate"] < 0.55

    def test_non_monomial_prior_rejected(self):
        code, _, err = invoke("mc-check", prog("even_die.pgcl"),
                              "--prior", "1/2 + x/2")
        assert code == 1
        assert "point-mass" in err


class TestQueryCommand:
    def test_queries_on_posterior(self):
        code, out, _ = invoke("query", prog("even_die.pgcl"),
                              "--query", "E[x]", "--query", "Var[x]",
                              "--query", "P[x > 3]")
        assert code == 0
        assert "E[x] = 4" in out
        assert "Var[x] = 8/3" in out
        assert "P[x > 3] = 2/3" in out
