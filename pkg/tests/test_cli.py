import json
from pathlib import Path

import pytest

from swss.cli import EXIT_CHECK, EXIT_MODEL, EXIT_OK, EXIT_PARSE, EXIT_USAGE, main

SPECS = Path(__file__).resolve().parent.parent / "specs"
N_SPEC = str(SPECS / "n_fixture.json")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_analyze_n_fixture(capsys):
    code, rep = run(capsys, "analyze", "--spec", N_SPEC, "--p", "0.5,0.5")
    assert code == EXIT_OK
    s = rep["swss"]
    for key in ("vartheta_p", "vartheta_p_oracle", "vartheta_p_drift"):
        assert s[key] == pytest.approx(2.0, abs=1e-9)
    assert s["abs_diff_closed_drift"] < 1e-9
    assert rep["stability"]["classification"] == "Stabilizable"
    assert rep["status"] == "OK"


def test_analyze_certify_both_regimes(capsys):
    code, rep = run(capsys, "analyze", "--spec", N_SPEC, "--certify", "--anchor", "2:2")
    assert code == EXIT_OK
    cert = rep["certificates"]["lyapunov"]
    assert cert["available"] and cert["kappa1"] > 0
    assert rep["certificates"]["idleness_target"] == pytest.approx(1.5)
    assert rep["drift"]["vertex_margin"] == pytest.approx(0.5)
    code, rep = run(capsys, "analyze", "--spec", str(SPECS / "n_transient.json"), "--certify")
    assert code == EXIT_OK
    assert rep["stability"]["classification"] == "Transient"
    assert rep["certificates"]["transience"]["min_margin"] > 0


def test_analyze_with_nth_block(capsys):
    code, rep = run(capsys, "analyze", "--spec", str(SPECS / "n_fixture_n400.json"))
    assert code == EXIT_OK
    assert rep["swss_nth"]["n"] == 400
    assert rep["stability"]["classification_n"] == "Stabilizable"


def test_malformed_and_invalid_specs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["analyze", "--spec", str(bad)]) == EXIT_PARSE
    doc = json.loads(Path(N_SPEC).read_text())
    doc["edges"].append({"class": "2", "pool": "1", "mu": 1.0})
    cyc = tmp_path / "cycle.json"
    cyc.write_text(json.dumps(doc))
    assert main(["analyze", "--spec", str(cyc)]) == EXIT_MODEL
    assert main(["analyze", "--spec", N_SPEC, "--p", "0.9,0.9"]) == EXIT_MODEL
    assert main(["analyze", "--spec", N_SPEC, "--anchor", "2:1"]) == EXIT_MODEL


def test_verify(capsys):
    code, rep = run(capsys, "verify", "--trials", "20", "--seed", "3")
    assert code == EXIT_OK
    assert rep["trials"] == 20
    assert max(rep["worst"][k] for k in ("closed_vs_oracle", "closed_vs_drift", "oracle_vs_drift")) < 1e-8
    code, rep = run(capsys, "verify", "--fixture", "N")
    assert code == EXIT_OK and rep["trials"] == 1
    code, rep = run(capsys, "verify", "--fixture", "N", "--corrupt-gains")
    assert code == EXIT_CHECK
    failed = {c["name"] for c in rep["checks"] if not c["passed"]}
    assert failed == {"gains_vs_drift_matrix"}


def test_whatif(capsys):
    code, rep = run(capsys, "whatif", "--spec", N_SPEC, "--from", "1", "--to", "2", "--delta", "0.4")
    assert code == EXIT_OK
    w = rep["whatif"]
    assert w["unchanged"]
    assert w["vartheta_p_after"] == pytest.approx(2.0)
    assert rep["input"]["nu_hat"] == pytest.approx([0.6, 1.2])
    assert main(["whatif", "--spec", N_SPEC, "--from", "1", "--to", "1", "--delta", "0.4"]) == EXIT_MODEL


def test_simulate_sde_summary(capsys, tmp_path):
    code, rep = run(capsys, "simulate-sde", "--spec", N_SPEC, "--anchor", "2:2", "--dt", "0.01", "--horizon", "50",
                    "--thin", "10", "--out", str(tmp_path), "--json")
    assert code == EXIT_OK
    assert rep["idleness_check"]["target"] == pytest.approx(1.5)
    assert (tmp_path / "summary.json").exists() and (tmp_path / "rep_000.csv").exists()


def test_simulate_ctmc_outputs(tmp_path, capsys):
    code = main(["simulate-ctmc", "--spec", N_SPEC, "--n", "100", "--horizon", "5", "--reps", "2",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert capsys.readouterr().out == ""
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["staffing"]["N_tilde_class"] == [160, 60]
    assert sorted(p.name for p in tmp_path.glob("rep_*.csv")) == ["rep_000.csv", "rep_001.csv"]


@pytest.mark.parametrize("argv", [["bogus"], [], ["analyze"], ["verify", "--trials", "0"],
                                  ["analyze", "--spec", N_SPEC, "--anchor", "x"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert capsys.readouterr().err


def test_global_flags_before_subcommand(capsys):
    code, rep = run(capsys, "--spec", N_SPEC, "--seed", "1", "analyze")
    assert code == EXIT_OK and rep["status"] == "OK"
