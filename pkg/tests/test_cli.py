import json

import numpy as np
import pytest

from wdn_pressure import cli, data

SMALL = {
    "cnn_emd": {"lookback": 32, "context": 64, "filters": 4, "branch_dilations": [1, 2]},
    "fusion": {"lstm_units": 4, "head_units": 4},
    "train": {"epochs": 1, "batch_size": 64},
    "forest": {"n_trees": 4, "max_depth": 6},
    "anomalies": {"count": 3, "margin": 160, "gap": 32},
    "detect": {"window": 48},
}


def _ok(argv):
    res = cli.run([str(a) for a in argv])
    assert res.exit_code == 0, res.summary
    return res


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    _ok(["simulate", "--days", 60, "--points", 5, "--seed", 42, "--out", d])
    return d


def test_simulate_line_count(sim):
    lines = (sim / "data.csv").read_text().splitlines()
    assert len(lines) == 5761
    assert lines[0].count("_pressure") == 6


def test_decompose_reconstructs(sim, tmp_path):
    res = _ok(["decompose", "--in", sim / "data.csv", "--sensor", "inlet_pressure", "--out", tmp_path])
    assert str(tmp_path / "imfs.svg") in res.artifacts
    rows = np.genfromtxt(tmp_path / "imfs.csv", delimiter=",", skip_header=1)
    src = data.read_csv(sim / "data.csv").inlet.values
    total = rows[:, 1:].sum(axis=1)
    assert np.max(np.abs(total - src)) <= 1e-9 * np.max(np.abs(src))


def test_acf_and_hht(sim, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"acf": {"max_lag": 100}}))
    _ok(["acf", "--in", sim / "data.csv", "--config", cfg, "--out", tmp_path])
    rows = (tmp_path / "acf.csv").read_text().splitlines()
    assert rows[0] == "lag,acf,pacf" and len(rows) == 102
    _ok(["hht", "--in", sim / "data.csv", "--sensor", "P01_pressure", "--out", tmp_path])
    assert (tmp_path / "hht.svg").read_text().count("<circle") > 100


def test_usage_errors(tmp_path, sim):
    assert cli.run(["bogus"]).exit_code == 2
    assert cli.run(["simulate", "--days", "x"]).exit_code == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"synth": {"nonsense": 1}}')
    assert cli.run(["simulate", "--config", str(bad), "--out", str(tmp_path)]).exit_code == 2
    bad.write_text("{oops")
    assert cli.run(["simulate", "--config", str(bad), "--out", str(tmp_path)]).exit_code == 2
    bad.write_text('{"unknown_section": {}}')
    assert cli.run(["simulate", "--config", str(bad), "--out", str(tmp_path)]).exit_code == 2
    assert cli.run(["predict", "--in", str(sim / "data.csv"), "--out", str(tmp_path)]).exit_code == 2


def test_pipeline_errors_name_operation(tmp_path):
    res = cli.run(["simulate", "--days", "1", "--out", str(tmp_path)])
    assert res.exit_code == 1 and "data.generate_network" in res.summary
    res = cli.run(["decompose", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
    assert res.exit_code == 1
    holey = tmp_path / "h"
    _ok(["simulate", "--days", 3, "--points", 1, "--rate", 0.1, "--out", holey])
    res = cli.run(["train-forecaster", "--in", str(holey / "data.csv"), "--out", str(tmp_path / "m")])
    assert res.exit_code == 1 and "models.train_forecaster" in res.summary


def test_main_exit_codes(capsys, tmp_path):
    assert cli.main(["bogus"]) == 2
    assert cli.main(["simulate", "--days", "2", "--points", "1", "--out", str(tmp_path)]) == 0
    assert "data.csv" in capsys.readouterr().out


def test_eval_identical_predictions(tmp_path):
    pred = tmp_path / "predictions.csv"
    pred.write_text("DateTime,index,sensor_id,actual,predicted\n"
                    "2024-01-01T00:00,0,inlet,3.0,3.0\n2024-01-01T00:15,1,inlet,3.5,3.5\n")
    (tmp_path / "labels.json").write_text("[]\n")
    _ok(["eval", "--in", pred, "--out", tmp_path])
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["accuracy"] == 100.0 and m["mape"] == 0.0
    assert "precision" not in m and "recall" not in m
    assert "| accuracy |" in (tmp_path / "report.md").read_text()


def test_eval_malformed(tmp_path):
    pred = tmp_path / "predictions.csv"
    pred.write_text("DateTime,index,sensor_id,actual,predicted\nx,0,inlet,abc,3.0\n")
    assert cli.run(["eval", "--in", str(pred), "--out", str(tmp_path)]).exit_code == 1


def _pipeline(root, cfg):
    """simulate → inject → impute → train-forecaster → predict → detect → eval."""
    d = {k: root / k for k in ("sim", "inj", "imp", "model", "pred", "det", "eval")}
    _ok(["simulate", "--days", 6, "--points", 2, "--seed", 3, "--out", d["sim"]])
    _ok(["inject", "--in", d["sim"] / "data.csv", "--config", cfg, "--rate", 0.05, "--seed", 3,
         "--out", d["inj"]])
    _ok(["impute", "--in", d["inj"] / "data.csv", "--config", cfg, "--seed", 3, "--save-model",
         "--out", d["imp"]])
    _ok(["train-forecaster", "--in", d["imp"] / "imputed.csv", "--config", cfg, "--seed", 3,
         "--out", d["model"]])
    _ok(["predict", "--in", d["imp"] / "imputed.csv", "--model", d["model"], "--out", d["pred"]])
    _ok(["detect", "--in", d["pred"] / "predictions.csv", "--config", cfg, "--out", d["det"]])
    _ok(["eval", "--in", d["pred"] / "predictions.csv", "--events", d["det"] / "events.json",
         "--labels", d["inj"] / "labels.json", "--config", cfg, "--out", d["eval"]])
    return d


def _snapshot(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_deterministic_and_inputs_untouched(tmp_path, small_config):
    a = _pipeline(tmp_path / "a", small_config)
    before = (a["inj"] / "data.csv").read_bytes()
    b = _pipeline(tmp_path / "b", small_config)
    assert _snapshot(tmp_path / "a") == _snapshot(tmp_path / "b")
    assert (a["inj"] / "data.csv").read_bytes() == before
    m = json.loads((a["eval"] / "metrics.json").read_text())
    assert {"f1", "precision", "recall", "mape", "accuracy"} <= set(m)
    labels = json.loads((a["inj"] / "labels.json").read_text())
    assert len(labels) == 3 and set(labels[0]) == {"sensor_id", "start_index", "end_index",
                                                   "peak_score", "direction"}
    rows = (a["pred"] / "predictions.csv").read_text().splitlines()
    assert len(rows) == 1 + 6 * 96 - 64
    assert list((a["imp"]).glob("forest_*.json"))


def test_fusion_train_and_predict(tmp_path, small_config):
    _ok(["simulate", "--days", 6, "--points", 2, "--seed", 1, "--out", tmp_path / "s"])
    _ok(["train-fusion", "--in", tmp_path / "s" / "data.csv", "--config", small_config, "--seed", 1,
         "--out", tmp_path / "f"])
    assert (tmp_path / "f" / "inlet_branch" / "network.nnw").exists()
    _ok(["predict", "--in", tmp_path / "s" / "data.csv", "--model", tmp_path / "f", "--out", tmp_path / "p"])
    rows = (tmp_path / "p" / "predictions.csv").read_text().splitlines()
    assert len(rows) == 1 + 6 * 96 - 96
    _ok(["eval", "--in", tmp_path / "p" / "predictions.csv", "--out", tmp_path / "e"])
    assert 0 < json.loads((tmp_path / "e" / "metrics.json").read_text())["accuracy"] <= 100
    _ok(["simulate", "--days", 6, "--points", 3, "--seed", 1, "--out", tmp_path / "s3"])
    res = cli.run(["predict", "--in", str(tmp_path / "s3" / "data.csv"), "--model", str(tmp_path / "f"),
                   "--out", str(tmp_path / "p3")])
    assert res.exit_code == 1 and "bundle expects 2 points" in res.summary
