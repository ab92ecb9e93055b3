from datetime import datetime, timedelta

import numpy as np
import pytest

from wdn_pressure import data, impute
from wdn_pressure.data import SensorSeries


def _series(values, valid=None, kind="pressure", start=datetime(2024, 1, 1)):
    values = np.asarray(values, dtype=float)
    valid = np.ones(len(values), bool) if valid is None else valid
    return SensorSeries("P01", kind, start, 15, values, valid)


def _step_series(days=7):
    n = days * 96
    hours = (np.arange(n) // 4) % 24
    return _series(np.where(hours < 12, 2.0, 3.0))


def test_step_function_learned():
    model = impute.fit_forest(_step_series(), impute.ForestConfig(n_trees=10, seed=1))
    assert impute.predict_pressure(model, datetime(2024, 2, 3, 3, 0)) == pytest.approx(2.0, abs=0.01)
    assert impute.predict_pressure(model, datetime(2024, 2, 3, 20, 0)) == pytest.approx(3.0, abs=0.01)
    for h in range(12):
        assert impute.predict_pressure(model, datetime(2024, 1, 9, h, 45)) == pytest.approx(2.0, abs=0.01)


def test_constant_targets_exact():
    model = impute.fit_forest(_series(np.full(200, 5.0)), impute.ForestConfig(n_trees=5))
    feats = data.time_feature_matrix(_series(np.zeros(300)))
    assert np.all(model.predict_features(feats) == 5.0)


def test_too_few_valid():
    valid = np.zeros(50, bool)
    valid[:3] = True
    with pytest.raises(impute.ImputeError):
        impute.fit_forest(_series(np.ones(50), valid), impute.ForestConfig(min_leaf=5))


def _forest(*leaves):
    return impute.ForestModel(tuple(impute.Leaf(v) for v in leaves), len(leaves), 8, 5,
                              impute.FEATURE_LAYOUT, 0)


def test_single_leaf_and_mean_of_trees():
    assert impute.predict_pressure(_forest(4.2), datetime(2024, 5, 5, 5, 15)) == 4.2
    assert impute.predict_pressure(_forest(4.0, 5.0), datetime(2024, 5, 5, 5, 15)) == 4.5


def test_impute_replaces_only_invalid():
    s = _series(np.arange(48, dtype=float) / 10 + 1)
    assert impute.impute_series(s, _forest(4.2)) == s
    valid = np.ones(48, bool)
    valid[24] = False  # 2024-01-01T06:00
    holey = s.with_values(np.where(valid, s.values, 0.0), valid)
    out = impute.impute_series(holey, _forest(4.2))
    assert out.values[24] == 4.2 and out.valid.all()
    assert np.array_equal(out.values[valid], s.values[valid])


def test_kind_mismatch():
    valid = np.ones(48, bool)
    valid[3] = False
    flow = _series(np.ones(48), valid, kind="flow")
    with pytest.raises(impute.ImputeError):
        impute.impute_series(flow, _forest(1.0))


def test_synthetic_rmse_and_determinism():
    cfg = data.SynthConfig(days=60, n_points=1, noise_std=0.02, seed=3)
    clean = data.generate_network(cfg)
    holey = data.inject_missing(clean, 0.1, 4)
    s, truth = holey.inlet, clean.inlet
    fc = impute.ForestConfig(seed=9)
    model = impute.fit_forest(s, fc)
    out = impute.impute_series(s, model)
    miss = ~s.valid
    rmse = np.sqrt(np.mean((out.values[miss] - truth.values[miss]) ** 2))
    assert rmse <= 2 * cfg.noise_std
    assert np.array_equal(out.values[s.valid], s.values[s.valid])
    lo, hi = s.values[s.valid].min(), s.values[s.valid].max()
    assert lo <= out.values.min() and out.values.max() <= hi
    again = impute.fit_forest(s, fc)
    assert impute.forest_to_json(again) == impute.forest_to_json(model)


def test_forest_json_round_trip():
    model = impute.fit_forest(_step_series(3), impute.ForestConfig(n_trees=3, max_depth=4, seed=2))
    text = impute.forest_to_json(model)
    back = impute.forest_from_json(text)
    assert back == model
    assert impute.forest_to_json(back) == text


def test_forest_json_malformed():
    with pytest.raises(impute.ImputeError):
        impute.forest_from_json('{"trees": [{"feature_index": 0}]}')
