import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tvpdfm.errors import TooFewReplications, ZeroTruth
from tvpdfm.montecarlo import emit_tables, relative_bias, run_condition, sd_estimates
from tvpdfm.simulate import ScenarioConfig


def test_relative_bias_examples():
    assert relative_bias([0.23], 0.2) == pytest.approx(15.0)
    assert relative_bias([0.9, 1.1], 1.0) == pytest.approx(0.0)
    # time-averaged form: mean over t, then over replications
    paths = np.array([[0.4, 0.6], [0.5, 0.7]])
    assert relative_bias(paths, 0.5, mode="invariant-estimated-as-tvp") == pytest.approx(10.0)
    with pytest.raises(ZeroTruth):
        relative_bias([0.1], 0.0)
    with pytest.raises(ValueError):
        relative_bias([0.1], 1.0, mode="other")


def test_sd_examples():
    assert sd_estimates([0.3, 0.3, 0.3]) == 0.0
    assert sd_estimates([0.0, 2.0]) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(TooFewReplications):
        sd_estimates([1.0])


@pytest.fixture(scope="module")
def small_report():
    sc = ScenarioConfig(1, "B", T=60, replications=3, seed=5, burn_in=100)
    return sc, run_condition(sc, "sr-sekf")


def test_report_contents(small_report):
    sc, rep = small_report
    assert rep.condition == "1B" and rep.replications == 3
    assert set(rep.bias) >= {"Lambda[1,1]", "Xi[1]", "Phi[1,1]", "Gamma[1,1]"}
    assert "Phi[1,2]" not in rep.bias
    assert rep.classification["Lambda[1,1]"] == "n/a"
    for label in ("Phi[1,2]", "Phi[2,1]", "Phi[1,1]", "Phi[2,2]"):
        v = rep.classification[label]
        assert v is None or 0.0 <= v <= 100.0
    assert 0.0 <= rep.convergence_pct <= 100.0
    assert rep.mean_iterations > 0


def test_report_is_deterministic(small_report):
    sc, rep = small_report
    again = run_condition(sc, "sr-sekf")
    assert json.dumps(rep.to_dict(), default=float) == json.dumps(again.to_dict(), default=float)


def test_tables_match_raw_dump(small_report, tmp_path):
    sc, rep = small_report
    paths = emit_tables([rep], tmp_path)
    for name in ("bias", "sd", "classification", "efficiency", "summary", "report"):
        assert paths[name].exists()
    with open(tmp_path / "raw" / "estimates_1B_sr-sekf.csv") as fh:
        raw = list(csv.DictReader(fh))
    assert len(raw) == 3
    ok = [r for r in raw if r["converged"] == "1"]
    with open(tmp_path / "tables" / "bias.csv") as fh:
        bias = {r["parameter"]: r["relative_bias_pct"] for r in csv.DictReader(fh)}
    with open(tmp_path / "tables" / "sd.csv") as fh:
        sd = {r["parameter"]: r["sd"] for r in csv.DictReader(fh)}
    truth = {"Lambda[1,1]": 1.0, "Xi[2]": 0.2, "Phi[1,1]": 0.7, "Gamma[2,1]": 0.5}
    for label, value in truth.items():
        est = np.array([float(r[label]) for r in ok])
        if len(est):
            assert_allclose(float(bias[label]), 100 * np.mean((est - value) / value), rtol=1e-5)
        if len(est) >= 2:
            assert_allclose(float(sd[label]), est.std(ddof=1), rtol=1e-5)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report[0]["condition"] == "1B"


def test_empty_report_set(tmp_path):
    paths = emit_tables([], tmp_path)
    for name in ("bias", "sd", "classification", "efficiency"):
        lines = paths[name].read_text().splitlines()
        assert len(lines) == 1
    assert json.loads(paths["report"].read_text()) == []


def test_threads_do_not_change_results():
    sc = ScenarioConfig(2, "A", T=50, replications=2, seed=8, burn_in=50)
    one = run_condition(sc, threads=1)
    two = run_condition(sc, threads=2)
    assert json.dumps(one.to_dict(), default=float) == json.dumps(two.to_dict(), default=float)
