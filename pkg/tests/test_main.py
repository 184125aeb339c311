import hashlib
import json

import pytest

from pocan.main import main, parse_pairs, parse_start
from pocan.model import Config

from conftest import MODELS_DIR


def model_path(name: str) -> str:
    return str(MODELS_DIR / name)


def run_json(capsys, *argv):
    code = main([*argv, "--json"])
    out = capsys.readouterr()
    return code, json.loads(out.out), out.err


def pair_rows(doc):
    return {(r["p"], r["q"]): r for r in doc["results"]["pairs"]}


def test_exptime_json(capsys):
    code, doc, err = run_json(capsys, "exptime", model_path("andor_row1.poc"))
    assert code == 0
    assert doc["command"] == "exptime"
    rows = pair_rows(doc)
    assert rows[("and_init", "or_ret0")]["value"] == pytest.approx(11.000, abs=1e-2)
    assert rows[("and_init", "or_ret1")]["value"] == pytest.approx(7.667, abs=1e-2)
    assert doc["precision"]["requested"] == 1e-3
    assert "Analysis complete" in err


def test_json_carries_model_hash(capsys):
    path = MODELS_DIR / "symmetric.poc"
    _, doc, _ = run_json(capsys, "term", str(path))
    assert doc["model"]["sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    assert pair_rows(doc)[("p", "p")]["prob"] == pytest.approx(1.0, abs=1e-6)


def test_infinite_expectation_is_reported_as_token(capsys):
    _, doc, _ = run_json(capsys, "exptime", model_path("symmetric.poc"))
    row = pair_rows(doc)[("p", "p")]
    assert row["value"] == "inf"
    assert row["abs_err"] is None


def test_classify(capsys):
    _, doc, _ = run_json(capsys, "classify", model_path("symmetric.poc"))
    assert pair_rows(doc)[("p", "p")]["verdict"] == "INFINITE"


def test_classify_with_pairs_outside_support(capsys):
    _, doc, _ = run_json(capsys, "classify", model_path("andor_row1.poc"), "--pairs", "and_init:and_ret0")
    assert pair_rows(doc)[("and_init", "and_ret0")]["verdict"] == "ZERO_PROBABILITY"


def test_validate_directory(capsys):
    assert main(["validate", str(MODELS_DIR)]) == 0
    out = capsys.readouterr().out
    assert "OK:" in out and "universal.dra" in out


def test_validate_broken_model(tmp_path, capsys):
    bad = tmp_path / "bad.poc"
    bad.write_text("poc v1\nstate p\nzero p 0 p 1\npos p -1 p 1/2\n", encoding="utf-8")
    assert main(["validate", str(bad)]) == 2
    assert "bad.poc" in capsys.readouterr().err


def test_missing_model_exits_with_validation_code(tmp_path, capsys):
    assert main(["term", str(tmp_path / "missing.poc")]) == 2
    assert "not found" in capsys.readouterr().err


def test_usage_error_exits_with_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["diverge", model_path("up_biased.poc")])
    assert info.value.code == 1


def test_infeasible_precision_exits_with_three(capsys):
    assert main(["exptime", model_path("andor_row1.poc"), "--mode", "rigorous"]) == 3
    assert "log2" in capsys.readouterr().err


def test_bad_config_exits_with_one(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("- not\n- a mapping\n", encoding="utf-8")
    assert main(["analyze", model_path("symmetric.poc"), "--config", str(cfg)]) == 1


def test_config_overrides_defaults(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("rel_err: 1.0e-4\n", encoding="utf-8")
    _, doc, _ = run_json(capsys, "term", model_path("symmetric.poc"), "--config", str(cfg))
    assert doc["precision"]["requested"] == 1e-4


def test_diverge(capsys):
    _, doc, _ = run_json(capsys, "diverge", model_path("up_biased.poc"), "--from", "p")
    assert doc["results"]["positive"] is True
    assert doc["results"]["witness"] == "POSITIVE_TREND_BSCC"
    assert doc["results"]["value"] == pytest.approx(1 / 3, rel=1e-6)


def test_model_check(capsys):
    _, doc, _ = run_json(capsys, "mc", model_path("andor_row1.poc"), "--dra", model_path("eventually_or1.dra"),
                         "--from", "and_init:1", "--rel-err", "1e-4")
    assert doc["results"]["probability"] == pytest.approx(0.300, abs=5e-4)
    assert doc["results"]["product_states"] == 12


def test_simulate_is_reproducible(capsys):
    argv = ["simulate", model_path("biased_down.poc"), "--from", "p", "--to", "p", "--samples", "2000",
            "--horizon", "500", "--seed", "3"]
    _, first, _ = run_json(capsys, *argv)
    _, second, _ = run_json(capsys, *argv)
    assert first["results"] == second["results"]
    assert first["results"]["estimate"] == "term"
    assert first["results"]["mean"] == pytest.approx(1.0, abs=1e-2)


def test_simulate_acceptance_is_flagged(capsys):
    _, doc, _ = run_json(capsys, "simulate", model_path("andor_row1.poc"), "--from", "and_init",
                         "--dra", model_path("universal.dra"), "--samples", "500", "--horizon", "100",
                         "--window", "10")
    assert doc["results"]["flag"] == "HEURISTIC"
    assert doc["results"]["mean"] == 1.0


def test_bounds(capsys):
    _, doc, _ = run_json(capsys, "bounds", model_path("biased_down.poc"))
    names = {b["name"] for b in doc["results"]["bounds"]}
    assert {"pumping", "potential_span", "grand_uniform"} <= names
    pumping = next(b for b in doc["results"]["bounds"] if b["name"] == "pumping")
    assert pumping["value_log2"] == pytest.approx(1.584962500721156)


def test_console_report_and_markdown(tmp_path, capsys):
    assert main(["analyze", model_path("andor_row1.poc"), "--report-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "--- pOC Analysis Report ---" in out
    assert "Markdown report saved to:" in out
    reports = list(tmp_path.glob("*/result.md"))
    assert len(reports) == 1
    assert reports[0].read_text(encoding="utf-8").startswith("# pOC Analysis Report")


def test_timing(capsys):
    _, doc, _ = run_json(capsys, "term", model_path("symmetric.poc"), "--timing")
    assert set(doc["timing"]) >= {"reach", "newton"}


def test_parse_start_and_pairs():
    assert parse_start("and_init") == Config("and_init", 1)
    assert parse_start("p:0") == Config("p", 0)
    assert parse_pairs("a:b, c:d") == [("a", "b"), ("c", "d")]
