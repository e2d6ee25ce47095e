import csv
import json

import pytest

from tvpdfm.cli import main


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--sim", "2", "--cond", "A", "--T", "60", "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


def test_simulate_writes_files(simulated):
    stem = simulated / "sim2A_T60_seed3"
    for suffix in (".csv", ".truth.json", ".spec.json"):
        assert stem.with_name(stem.name + suffix).exists()
    with open(stem.with_suffix(".csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["y1", "y2", "y3", "y4", "y5", "y6", "x1"]
    assert len(rows) == 61
    manifest = json.loads((simulated / "manifest.json").read_text())
    assert manifest["resolved_config"]["scenario"]["seed"] == 3
    assert "numpy" in manifest["versions"]


def test_simulate_is_reproducible(simulated, tmp_path):
    main(["simulate", "--sim", "2", "--cond", "A", "--T", "60", "--seed", "3", "--out", str(tmp_path)])
    name = "sim2A_T60_seed3.csv"
    assert (tmp_path / name).read_bytes() == (simulated / name).read_bytes()


def test_fit_round_trip(simulated, tmp_path):
    data = simulated / "sim2A_T60_seed3.csv"
    spec = simulated / "sim2A_T60_seed3.spec.json"
    code = main(["fit", str(data), "--spec", str(spec), "--out", str(tmp_path)])
    assert code in (0, 4)
    for name in ("params.csv", "filtered.csv", "smoothed.csv", "classification.csv", "fit.json", "manifest.json"):
        assert (tmp_path / name).exists()
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert set(fit["classification"]) == {"Gamma[1,1]", "Gamma[2,1]"}
    with open(tmp_path / "smoothed.csv") as fh:
        assert len(list(csv.reader(fh))) == 61


def test_fit_missing_value(simulated, tmp_path):
    lines = (simulated / "sim2A_T60_seed3.csv").read_text().splitlines()
    cells = lines[5].split(",")
    cells[2] = "NA"
    lines[5] = ",".join(cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    spec = simulated / "sim2A_T60_seed3.spec.json"
    assert main(["fit", str(bad), "--spec", str(spec), "--out", str(tmp_path / "o")]) == 3


def test_fit_header_mismatch(simulated, tmp_path):
    lines = (simulated / "sim2A_T60_seed3.csv").read_text().splitlines()
    lines[0] = lines[0].replace("y6", "z6")
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    spec = simulated / "sim2A_T60_seed3.spec.json"
    assert main(["fit", str(bad), "--spec", str(spec), "--out", str(tmp_path / "o")]) == 3


def test_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": {"simulation": 3}}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text("{not json")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["fit", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == 2


def test_mc_smoke(tmp_path, capsys):
    code = main(["mc", "--sim", "2", "--cond", "A", "--T", "50", "--seed", "1", "--reps", "2",
                 "--out", str(tmp_path)])
    assert code == 0
    for name in ("bias.csv", "sd.csv", "classification.csv", "efficiency.csv", "summary.txt"):
        assert (tmp_path / "tables" / name).exists()
    assert (tmp_path / "raw" / "estimates_2A_sr-sekf.csv").exists()
    assert json.loads((tmp_path / "manifest.json").read_text())["resolved_config"]["scenario"]["replications"] == 2


def test_compare_smoke(tmp_path):
    code = main(["compare", "--sim", "2", "--cond", "A", "--T", "50", "--seed", "1", "--reps", "2",
                 "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "tables" / "comparison.csv") as fh:
        rows = {r[0]: r[1:] for r in csv.reader(fh)}
    assert rows["measure"] == ["sr-sekf", "sekf"]
    diff = rows["max_state_difference"][0]
    assert diff == "NA" or float(diff) < 1e-6
