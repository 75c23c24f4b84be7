"""Sklearn-facade behavior: params protocol, clone, fit/predict."""

import numpy as np
import pytest
from sklearn.base import clone

from wzcast.errors import ConfigError
from wzcast.estimator import CorridorForecaster


def tiny_forecaster(**overrides):
    defaults = dict(history=6, horizon=2, channels=4, heads=2, head_dim=3,
                    recurrent_dim=5, time_dim=3, k_neighbors=2,
                    epochs=2, batch_size=8, seed=0)
    defaults.update(overrides)
    return CorridorForecaster(**defaults)


def test_get_set_params_roundtrip():
    est = tiny_forecaster()
    params = est.get_params()
    assert params["horizon"] == 2 and params["k_neighbors"] == 2
    est.set_params(horizon=1, channels=8)
    assert est.horizon == 1 and est.channels == 8


def test_clone_keeps_settings():
    est = tiny_forecaster(seed=5)
    copy = clone(est)
    assert copy.get_params() == est.get_params()


def test_fit_predict_shapes(small_corridor):
    est = tiny_forecaster()
    est.fit(small_corridor)
    assert est.params_ is not None
    samples = est.data_.splits.test[:3]
    pred = est.predict(samples)
    assert pred.shape == (3, est.n_segments_, est.horizon)
    assert np.all(np.isfinite(pred))
    bundle = est.data_.bundle
    assert pred.max() <= bundle.vmax + (bundle.vmax - bundle.vmin)  # sane MPH scale


def test_predict_by_anchor_matches_samples(small_corridor):
    est = tiny_forecaster()
    est.fit(small_corridor)
    sample = est.data_.splits.test[0]
    by_sample = est.predict([sample])
    by_anchor = est.predict([sample.anchor])
    assert np.array_equal(by_sample, by_anchor)


def test_predict_beyond_data_end(small_corridor):
    # forecasting needs history only: the last valid anchor is T itself
    est = tiny_forecaster()
    est.fit(small_corridor)
    end = est.data_.bundle.n_steps
    pred = est.predict([end])
    assert pred.shape == (1, est.n_segments_, est.horizon)
    from wzcast.errors import DataError

    with pytest.raises(DataError):
        est.predict([end + 1])


def test_predict_before_fit_raises():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        tiny_forecaster().predict([0])


def test_fit_rejects_junk_input():
    with pytest.raises(ConfigError):
        tiny_forecaster().fit(42)


def test_evaluate_and_score(small_corridor):
    est = tiny_forecaster()
    est.fit(small_corridor)
    result = est.evaluate(split="test")
    assert result.all.count > 0
    assert est.score() == pytest.approx(-min(r.val_mae for r in est.history_.records))
