import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dplet import metrics
from dplet.config import ModelConfig, TrainSchedule
from dplet.data_io import SyntheticSpec, generate_synthetic
from dplet.errors import ShapeError
from dplet.evaluation import (
    ABLATION_ROWS,
    Scaler,
    apply_scaler,
    covered_series,
    format_ablation,
    format_params,
    mean_forecast,
    metric_report,
    persistence_forecast,
    report_params,
    run_ablation,
    standardize_for_eval,
)
from dplet.predictor import count_params
from dplet.training import make_windows, split_series

shapes = st.tuples(st.integers(1, 4), st.integers(1, 6))
vals = st.floats(-1e3, 1e3)


# -- metrics -----------------------------------------------------------------------------

def test_perfect_forecast():
    y = np.random.default_rng(0).standard_normal((3, 4))
    assert metrics.mse(y, y) == 0.0 and metrics.mae(y, y) == 0.0


@pytest.mark.parametrize("y,yhat,mse,mae", [
    ([0, 0], [1, 1], 1.0, 1.0),
    ([0, 2], [1, 1], 1.0, 1.0),
    ([0, 4], [0, 0], 8.0, 2.0),
])
def test_metric_hand_values(y, yhat, mse, mae):
    assert metrics.mse(y, yhat) == mse and metrics.mae(y, yhat) == mae
    assert metrics.mae(y, yhat) ** 2 <= metrics.mse(y, yhat)


def test_metric_shape_mismatch():
    with pytest.raises(ShapeError):
        metrics.mse(np.ones((2, 3)), np.ones((3, 2)))


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_jensen_and_symmetry(data):
    shape = data.draw(shapes)
    y = data.draw(arrays(np.float64, shape, elements=vals))
    yhat = data.draw(arrays(np.float64, shape, elements=vals))
    mse, mae = metrics.mse(y, yhat), metrics.mae(y, yhat)
    assert mae ** 2 <= mse * (1 + 1e-12) + 1e-300
    assert mse == metrics.mse(yhat, y) and mae == metrics.mae(yhat, y)


def test_metric_report_fields():
    y = np.zeros((2, 3, 4))
    r = metric_report(y, y + 1, "raw", ModelConfig(horizon=4), seed=3)
    assert (r.mse, r.mae, r.horizon, r.num_samples, r.scale, r.seed) == (1.0, 1.0, 4, 24, "raw", 3)
    assert r.param_count == count_params(ModelConfig(horizon=4))


# -- standardization -----------------------------------------------------------------------

def windows(seed=0):
    x = generate_synthetic(SyntheticSpec(num_channels=3, total_steps=400, period=24, seed=seed))
    return split_series(x, 48, 12, (0.5, 0.25, 0.25))


def test_train_split_standardizes_to_zero_mean_unit_std():
    splits = windows()
    (tr, va, te), scaler = standardize_for_eval(splits[0], splits)
    series = covered_series(tr)
    assert np.abs(series.mean(axis=1)).max() <= 1e-10
    np.testing.assert_allclose(series.std(axis=1), 1.0, rtol=1e-10)
    assert np.array_equal(va.offsets, splits[1].offsets)


def test_covered_series_reassembles_source():
    x = np.arange(100.0)[None] * np.array([[1.0], [2.0]])
    ds = make_windows(x[:, 10:70], 8, 4, 5, start=10)
    np.testing.assert_array_equal(covered_series(ds), x[:, 10:10 + 8 + 4 + ds.offsets[-1] - 10])


def test_scaler_not_idempotent_and_inverse_exact():
    splits = windows(1)
    _, scaler = standardize_for_eval(splits[0], splits)
    once = apply_scaler(scaler, splits[1])
    twice = apply_scaler(scaler, once)
    assert not np.array_equal(once.inputs, twice.inputs)
    raw = splits[1].inputs[0]
    assert np.abs(scaler.inverse(scaler.transform(raw)) - raw).max() <= 1e-12


def test_zero_variance_channel_warns_and_floors():
    vals_ = np.vstack([np.arange(10.0), np.full(10, 4.0)])
    with pytest.warns(RuntimeWarning, match="zero variance"):
        s = Scaler.fit(vals_)
    assert s.std[1] == 1e-5 and np.all(np.isfinite(s.transform(vals_)))


def test_baselines():
    ds = make_windows(np.arange(20.0)[None], 5, 3, 4)
    assert persistence_forecast(ds)[0, 0].tolist() == [4.0, 4.0, 4.0]
    assert mean_forecast(ds, np.array([2.5]))[1, 0].tolist() == [2.5, 2.5, 2.5]


# -- parameter report -------------------------------------------------------------------------

def test_report_params_sums_to_total():
    for variant in ("full", "data_processing_only", "local_enhancement_only", "seasonal"):
        cfg = ModelConfig(variant=variant)
        parts, total = report_params(cfg)
        assert sum(parts.values()) == total == count_params(cfg)


def test_seasonal_report_doubles():
    assert report_params(ModelConfig(variant="seasonal"))[1] == 2 * report_params(ModelConfig())[1]


def test_plain_linear_head_count():
    parts, _ = report_params(ModelConfig(variant="data_processing_only"))
    assert parts["head"] == 995_472
    assert "995,472" in format_params(ModelConfig())


# -- ablation ------------------------------------------------------------------------------------

def test_ablation_rows_share_protocol():
    data = generate_synthetic(SyntheticSpec(num_channels=2, total_steps=240, period=24))
    cfg = ModelConfig(lookback=24, horizon=6, patch_len=6, stride=3, d_model=8, n_heads=2, n_layers=1, d_ff=16)
    rows = run_ablation(data, cfg, TrainSchedule(max_epochs=2, split=(0.5, 0.25, 0.25), seed=4))
    assert [r.label for r in rows] == [
        "Prediction+Data Processing", "Prediction+Local Feature Enhancement", "Proposed Framework"
    ]
    assert [r.variant for r in rows] == [v for _, v in ABLATION_ROWS]
    assert len({r.seed for r in rows}) == 1 and len({r.split_hash for r in rows}) == 1
    assert all(r.error is None and r.mse >= 0 and r.mae ** 2 <= r.mse for r in rows)
    table = format_ablation(rows)
    assert table.count("\n") == 3 and "Proposed Framework" in table


def test_ablation_continues_after_failure(monkeypatch):
    from dplet import evaluation
    from dplet.errors import TrainingError

    real = evaluation.fit_on_splits

    def flaky(config, *args):
        if config.variant == "local_enhancement_only":
            raise TrainingError("epoch 1: diverged")
        return real(config, *args)

    monkeypatch.setattr(evaluation, "fit_on_splits", flaky)
    data = generate_synthetic(SyntheticSpec(num_channels=2, total_steps=240, period=24))
    cfg = ModelConfig(lookback=24, horizon=6, patch_len=6, stride=3, d_model=4, n_heads=1, n_layers=1, d_ff=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = run_ablation(data, cfg, TrainSchedule(max_epochs=1, split=(0.5, 0.25, 0.25)))
    assert rows[1].error == "epoch 1: diverged" and rows[1].mse is None
    assert rows[0].mse is not None and rows[2].mse is not None
    assert "failed" in format_ablation(rows)
