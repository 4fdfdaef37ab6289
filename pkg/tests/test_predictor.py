import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dplet.config import ModelConfig
from dplet.errors import ConfigurationError, ParameterError, ShapeError
from dplet.numerics import Tensor, backward, mse_loss
from dplet.predictor import (
    DPLETModel,
    build_seasonal_variant,
    count_params,
    encode,
    encoder_shapes,
    head,
    model_forward,
    moving_average,
    param_breakdown,
    seasonal_decompose,
)
from dplet.processing import TrafficMatrix, normalize
from dplet.tsvdr import tsvdr_denoise
from fdcheck import FLOOR, numeric_grad, rel_err

TINY = ModelConfig(lookback=16, horizon=3, patch_len=4, stride=2, d_model=4, n_heads=1, n_layers=1, d_ff=8)
SMALL = ModelConfig(lookback=48, horizon=6, patch_len=8, stride=4, d_model=8, n_heads=2, n_layers=2, d_ff=16)


def series(m, length, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    return 2.0 + np.sin(2 * np.pi * t / 12)[None] * rng.uniform(0.5, 2, (m, 1)) + 0.1 * rng.standard_normal((m, length))


# -- encoder -------------------------------------------------------------------------

def test_attention_rows_sum_to_one_and_shape_preserved():
    model = DPLETModel(SMALL, seed=1)
    patches, _ = model.prepare(series(3, 48))
    attn = []
    model.forward_normalized(patches, attention=attn)
    assert len(attn) == SMALL.n_layers
    for a in attn:
        assert a.shape == (3, SMALL.n_heads, SMALL.num_patches, SMALL.num_patches)
        assert np.abs(a.sum(axis=-1) - 1).max() <= 1e-12


@settings(max_examples=10, deadline=None)
@given(m=st.integers(1, 4), seed=st.integers(0, 999))
def test_encode_shape(m, seed):
    rng = np.random.default_rng(seed)
    from dplet import nn

    params = nn.init_params(encoder_shapes(5, 4, 2, 6), rng)
    tokens = Tensor(rng.standard_normal((m, 5, 4)))
    assert encode(tokens, params, 2, 2).shape == (m, 5, 4)


def test_encode_rejects_positional_mismatch():
    from dplet import nn

    params = nn.init_params(encoder_shapes(5, 4, 1, 6), np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        encode(Tensor(np.ones((2, 6, 4))), params, 1, 1)


def test_channel_equivariance_bitwise_after_denoising():
    model = DPLETModel(SMALL, seed=2)
    x = tsvdr_denoise(series(5, 48, seed=2))
    perm = np.array([3, 0, 4, 1, 2])
    a = model.predict(x, denoised=True)
    b = model.predict(x[perm], denoised=True)
    assert np.array_equal(a[perm], b)


def test_channel_equivariance_through_tsvdr():
    # the Jacobi sweep order follows channel order, so agreement is to rounding
    model = DPLETModel(SMALL, seed=3)
    x = series(5, 48, seed=3)
    perm = np.array([4, 2, 0, 3, 1])
    np.testing.assert_allclose(model.predict(x)[perm], model.predict(x[perm]), rtol=1e-9, atol=1e-9)


# -- head -------------------------------------------------------------------------------

def test_zero_head_outputs_bias():
    enc = Tensor(np.random.default_rng(4).standard_normal((3, 5, 4)))
    b = np.array([1.0, -2.0])
    out = head(enc, Tensor(np.zeros((20, 2))), Tensor(b))
    assert np.array_equal(out.data, np.tile(b, (3, 1)))


def test_head_flatten_order_token_slowest():
    n, d = 3, 2
    enc = np.zeros((1, n, d))
    enc[0, 1, 0] = 1.0  # token 1, feature 0 -> flat index 1*d + 0 = 2
    w = np.zeros((n * d, 1))
    w[2, 0] = 7.0
    assert head(Tensor(enc), Tensor(w), Tensor(np.zeros(1))).data.tolist() == [[7.0]]


def test_head_shape_error():
    with pytest.raises(ShapeError):
        head(Tensor(np.ones((1, 3, 2))), Tensor(np.ones((5, 1))), Tensor(np.zeros(1)))


def test_head_gradient():
    rng = np.random.default_rng(5)
    arrays = {"e": rng.standard_normal((2, 3, 2)), "w": rng.standard_normal((6, 4)), "b": rng.standard_normal(4)}
    grads = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    backward(mse_loss(head(grads["e"], grads["w"], grads["b"]), Tensor(np.zeros((2, 4)))))
    num = numeric_grad(lambda d: mse_loss(head(Tensor(d["e"]), Tensor(d["w"]), Tensor(d["b"])),
                                          Tensor(np.zeros((2, 4)))).item(), arrays, "w")
    assert rel_err(grads["w"].grad, num).max() <= 1e-5


# -- model_forward ---------------------------------------------------------------------

@pytest.mark.parametrize("variant", ["full", "data_processing_only", "local_enhancement_only", "seasonal"])
def test_forward_shape(variant):
    cfg = SMALL.replace(variant=variant, ma_window=5)
    x = TrafficMatrix(series(4, 48), [f"c{i}" for i in range(4)])
    model = DPLETModel(cfg, seed=0)
    f = model_forward(x, cfg, model.params)
    assert f.values.shape == (4, 6) and f.channel_ids == x.channel_ids
    assert np.all(np.isfinite(f.values))


@pytest.mark.parametrize("variant", ["full", "local_enhancement_only", "seasonal"])
def test_zero_weights_forecast_the_window_mean(variant):
    cfg = SMALL.replace(variant=variant, ma_window=5)
    model = DPLETModel(cfg, seed=0)
    for p in model.params.values():
        p.data = np.zeros_like(p.data)
    x = series(3, 48, seed=6)
    source = tsvdr_denoise(x) if cfg.uses_tsvdr else x
    _, mu, _ = normalize(source)
    assert np.array_equal(model.predict(x), np.repeat(mu[:, None], 6, axis=1))


def test_channel_locality_of_forecasts():
    model = DPLETModel(SMALL, seed=7)
    xd = tsvdr_denoise(series(4, 48, seed=7))
    base = model.predict(xd, denoised=True)
    for j in range(4):
        y = xd.copy()
        y[j] = y[j] * 1.7 + 0.3
        out = model.predict(y, denoised=True)
        others = [i for i in range(4) if i != j]
        assert np.array_equal(out[others], base[others])
        assert not np.array_equal(out[j], base[j])


def test_wrong_lookback_is_shape_error():
    with pytest.raises(ShapeError):
        DPLETModel(SMALL).predict(np.ones((2, 40)))


# -- parameter accounting -----------------------------------------------------------------

def test_head_count_closed_form():
    parts = param_breakdown(ModelConfig())
    assert ModelConfig().num_patches == 54
    assert parts["head"] == 54 * 128 * 144 + 144 == 995_472


def test_default_count_and_breakdown():
    cfg = ModelConfig()
    parts = param_breakdown(cfg)
    assert sum(parts.values()) == count_params(cfg) == 1_615_632
    assert DPLETModel(cfg).num_params() == count_params(cfg)


@pytest.mark.parametrize("cfg", [ModelConfig(), ModelConfig(horizon=72), SMALL, TINY])
def test_seasonal_doubles(cfg):
    assert count_params(cfg.replace(variant="seasonal")) == 2 * count_params(cfg)
    assert build_seasonal_variant(cfg.replace(ma_window=3)).num_params() == 2 * count_params(cfg)


def test_count_independent_of_seed():
    assert DPLETModel(SMALL, seed=1).num_params() == DPLETModel(SMALL, seed=99).num_params()


def test_variant_counts_differ_only_by_enhancement():
    full, plain = ModelConfig(), ModelConfig(variant="data_processing_only")
    assert count_params(full) - count_params(plain) == param_breakdown(full)["local_enhancement"]
    assert count_params(ModelConfig(variant="local_enhancement_only")) == count_params(full)


# -- seasonal decomposition -----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(length=st.integers(4, 60), half=st.integers(0, 10), seed=st.integers(0, 9999))
def test_decomposition_sums_back(length, half, seed):
    w = 2 * half + 1
    if w >= length:
        return
    x = np.random.default_rng(seed).standard_normal((2, length)) * 10
    trend, seasonal = seasonal_decompose(x, w)
    # seasonal is defined as x - trend, so the sum is exact up to one rounding
    assert np.all(np.abs(trend + seasonal - x) <= 2 * np.finfo(float).eps * np.maximum(np.abs(x), np.abs(trend)))


def test_constant_input_has_zero_seasonal():
    trend, seasonal = seasonal_decompose(np.full((2, 30), 3.3), 25)
    assert np.all(seasonal == 0) and np.all(trend == 3.3)


def test_moving_average_replicate_padding():
    x = np.array([0.0, 0.0, 3.0, 0.0, 0.0])
    np.testing.assert_allclose(moving_average(x, 3), [0, 1, 1, 1, 0], atol=1e-15)


@pytest.mark.parametrize("w", [4, 16, 17])
def test_bad_windows(w):
    with pytest.raises(ParameterError):
        moving_average(np.ones(16), w)


def test_seasonal_window_must_be_shorter_than_lookback():
    with pytest.raises(ParameterError):
        build_seasonal_variant(TINY.replace(ma_window=17))


# -- full-model gradient check ------------------------------------------------------------

def tiny_gradient_errors(variant="full", seed=0):
    cfg = TINY.replace(variant=variant, ma_window=5)
    model = DPLETModel(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    x = series(2, 16, seed=seed)
    target = rng.standard_normal((2, 3))
    patches, _ = model.prepare(x)
    names = list(model.params)

    def loss_of(arrays):
        return mse_loss(model_with(arrays).forward_normalized(patches), Tensor(target))

    def model_with(arrays):
        return DPLETModel(cfg, {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}, seed=seed)

    arrays = {k: p.data.copy() for k, p in model.params.items()}
    m = model_with(arrays)
    backward(mse_loss(m.forward_normalized(patches), Tensor(target)))
    base = loss_of(arrays).item()
    floor = FLOOR * max(1.0, abs(base))
    worst = {}
    for name in names:
        num = numeric_grad(lambda d: loss_of(d).item(), arrays, name)
        worst[name] = float(rel_err(m.params[name].grad, num, floor).max())
    return worst


def test_full_model_gradients_match_fd():
    errs = tiny_gradient_errors("full")
    assert max(errs.values()) <= 1e-4, errs


@pytest.mark.parametrize("variant", ["data_processing_only", "seasonal"])
def test_variant_gradients_match_fd(variant):
    errs = tiny_gradient_errors(variant, seed=1)
    assert max(errs.values()) <= 1e-4, errs
