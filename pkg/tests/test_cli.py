import json

import pytest

from dynalloc.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_value_scenario_c(capsys):
    code, out, _ = run(capsys, "value", "scenario_c")
    assert code == 0
    rep = json.loads(out)
    assert {v["w,w"] for v in rep["values"].values()} == {"13/10"}
    assert "oracle" in rep["values"] and "whittle" in rep["values"]


def test_value_retirement_above_bound(capsys):
    code, out, _ = run(capsys, "value", "scenario_c", "--retirement", "5")
    assert code == 0
    assert {v["w,w"] for v in json.loads(out)["values"].values()} == {"5"}


def test_value_scenario_e(capsys):
    code, out, _ = run(capsys, "value", "scenario_e")
    rep = json.loads(out)
    assert code == 0
    assert rep["values"]["oracle"] == rep["values"]["decreasing"]
    assert "whittle" not in rep["values"]


def test_value_with_oracle_over_budget(capsys):
    code, out, _ = run(capsys, "value", "scenario_d", "--budget", "3")
    rep = json.loads(out)
    assert code == 0
    assert "oracle" in rep["skipped"] and "oracle" not in rep["values"]


def test_value_start_override(capsys):
    code, out, _ = run(capsys, "value", "scenario_d", "--start", "1,1")
    assert code == 0
    assert json.loads(out)["start"] == [1, 1]
    code, _, err = run(capsys, "value", "scenario_d", "--start", "3,0")
    assert code == 2 and "lattice point" in err


@pytest.mark.parametrize(
    "name,code,failed",
    [("scenario_c", 0, None), ("bad_bound", 1, "project 0: bound"), ("non_refining", 1, "F1"), ("correlated", 1, "F4")],
)
def test_validate(capsys, name, code, failed):
    got, out, _ = run(capsys, "validate", name)
    assert got == code
    names = [c["name"] for c in json.loads(out)["checks"] if not c["passed"]]
    assert names == ([] if failed is None else [failed])


def test_parse_error_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "beta": 1/2\n}\n')
    code, _, err = run(capsys, "validate", str(bad))
    assert code == 2
    assert f"{bad}:2:" in err


def test_schema_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"beta": "1/2"}')
    code, _, err = run(capsys, "value", str(bad))
    assert code == 2 and "lattice" in err


def test_missing_file(capsys):
    code, _, err = run(capsys, "value", "no_such_scenario")
    assert code == 2


def test_verify_suites(capsys):
    code, out, _ = run(capsys, "verify", "scenario_c", "--suite", "thm-main")
    assert code == 0 and json.loads(out)["verdict"] == "pass"
    code, out, _ = run(capsys, "verify", "scenario_d", "--suite", "thm-index-properties")
    census = next(c for c in json.loads(out)["checks"] if c["name"] == "census matches closed form")
    assert code == 0 and census["census"]["enumerated"] == 50


def test_verify_perturbation_fails_with_witness(capsys):
    code, out, _ = run(capsys, "verify", "perturbed_c", "--suite", "bellman")
    rep = json.loads(out)
    assert code == 1
    bad = [c for c in rep["checks"] if c["passed"] is False]
    assert bad[0]["witness"]["point"] == [1, 0]


def test_verify_budget_exit_code(capsys):
    code, out, _ = run(capsys, "verify", "scenario_d", "--suite", "lemma-q", "--budget", "3")
    assert code == 3 and json.loads(out)["verdict"] == "skipped"


def test_unknown_suite(capsys):
    code, _, _ = run(capsys, "verify", "scenario_c", "--suite", "nope")
    assert code == 2


def test_random_count_zero(capsys):
    code, out, _ = run(capsys, "random", "--count", "0")
    rep = json.loads(out)
    assert code == 0 and rep["verdict"] == "pass" and rep["instances"] == []


def test_random_caps_over_budget(capsys):
    code, out, _ = run(capsys, "random", "--max-atoms", "9", "--max-d", "3")
    assert code == 3 and json.loads(out)["verdict"] == "rejected"


def test_random_is_reproducible(capsys):
    first = run(capsys, "random", "--seed", "7", "--count", "3", "--suite", "thm-main")
    second = run(capsys, "random", "--seed", "7", "--count", "3", "--suite", "thm-main")
    assert first == second
    assert first[0] == 0


def test_reports_are_byte_identical(capsys):
    a = run(capsys, "verify", "scenario_b", "--suite", "gittins")
    b = run(capsys, "verify", "scenario_b", "--suite", "gittins")
    assert a == b


def test_timing_is_opt_in(capsys):
    _, out, _ = run(capsys, "value", "scenario_a")
    assert "timing_seconds" not in json.loads(out)
    _, out, _ = run(capsys, "value", "scenario_a", "--timing")
    assert "timing_seconds" in json.loads(out)


def test_text_format(capsys):
    code, out, _ = run(capsys, "verify", "scenario_a", "--suite", "prop-ui", "--format", "text")
    assert code == 0
    assert out.splitlines()[0].startswith("verify: scenario_a")
    assert "PASS" in out


def test_float_mode(capsys):
    code, out, _ = run(capsys, "value", "scenario_c", "--mode", "float")
    rep = json.loads(out)
    assert code == 0
    assert rep["values"]["oracle"]["w,w"] == pytest.approx(1.3)


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0 and "scenario_c" in out.split()
