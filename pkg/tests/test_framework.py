import numpy as np
import pytest

from mtpnet.decomposition import DecompositionConfig, decompose
from mtpnet.framework import ForecastModel, TrendLinear, forecast, trend_linear
from mtpnet.pyramid import PyramidConfig
from mtpnet.tensor import Tensor

CFG = PyramidConfig(lookback=16, horizon=8, decoder_history=8, n_vars=2, patch_sizes=(2, 3), channels=2, heads=2,
                    dropout=0.0)


def test_trend_linear_examples():
    x = np.random.default_rng(0).normal(size=(5, 3))
    selector = np.zeros((5, 4))
    selector[-1] = 1.0
    out = trend_linear(x, Tensor(selector), Tensor(np.zeros(4))).data
    np.testing.assert_array_equal(out, np.repeat(x[-1:], 4, axis=0))
    const = trend_linear(x, Tensor(np.zeros((5, 2))), Tensor(np.array([1.5, -2.0]))).data
    assert const.tolist() == [[1.5] * 3, [-2.0] * 3]
    assert trend_linear(np.array([[2.0], [4.0]]), Tensor(np.array([[0.5], [0.5]]))).data.tolist() == [[3.0]]
    with pytest.raises(ValueError):
        trend_linear(x, Tensor(np.zeros((4, 2))))


def test_trend_weights_shared_across_variables():
    lin = TrendLinear(6, 3, np.random.default_rng(1))
    col = np.random.default_rng(2).normal(size=(6, 1))
    out = lin(np.hstack([col, col, col])).data
    assert np.all(out == out[:, :1])
    assert lin.weight.shape == (6, 3) and lin.bias.shape == (3,)


def test_decomposed_forecast_is_a_manual_pipeline():
    model = ForecastModel(CFG, "decomposed", DecompositionConfig((5,)), seed=1)
    x = np.random.default_rng(3).normal(size=(16, 2))
    parts = decompose(x, DecompositionConfig((5,)))
    seasonal = model.mtpnet(parts.seasonal).data
    trend = parts.trend.T @ model.linear.weight.data
    trend = trend.T + model.linear.bias.data[:, None]
    out = forecast(x, model).data
    np.testing.assert_allclose(out, seasonal + trend, atol=1e-12)
    s, t = model.branches(x)
    assert np.array_equal(out, s.data + t.data)


def test_trend_as_mtpnet_swaps_branches():
    model = ForecastModel(CFG, "trend_as_mtpnet", seed=1)
    x = np.random.default_rng(4).normal(size=(3, 16, 2))
    parts = decompose(x)
    s, t = model.branches(x)
    np.testing.assert_array_equal(s.data, model.mtpnet(parts.trend).data)
    np.testing.assert_array_equal(t.data, model.linear(parts.seasonal).data)


def test_no_decomposition_is_mtpnet_alone():
    model = ForecastModel(CFG, "no_decomposition", seed=1)
    assert model.linear is None
    x = np.random.default_rng(5).normal(size=(16, 2))
    np.testing.assert_array_equal(model(x).data, model.mtpnet(x).data)
    assert not any(n.startswith("linear") for n in model.parameters())


def test_silent_trend_branch_leaves_seasonal_output():
    model = ForecastModel(CFG, seed=2)
    model.linear.weight.data[:] = 0.0
    model.linear.bias.data[:] = 0.0
    x = np.random.default_rng(6).normal(size=(16, 2))
    np.testing.assert_array_equal(model(x).data, model.mtpnet(decompose(x).seasonal).data)


def test_zero_branches_give_zero_forecast():
    model = ForecastModel(CFG, seed=3)
    for p in model.parameters().values():
        p.data = np.zeros_like(p.data)
    assert np.all(model(np.ones((16, 2))).data == 0.0)


def test_identity_window_sends_zero_to_pyramid():
    model = ForecastModel(CFG, decomposition=DecompositionConfig((1,)), seed=4)
    x = np.random.default_rng(7).normal(size=(16, 2))
    zero_response = model.mtpnet(np.zeros((16, 2))).data
    np.testing.assert_allclose(model(x).data, zero_response + model.linear(x).data, atol=1e-14)


def test_input_shape_and_mode_checked():
    model = ForecastModel(CFG, seed=0)
    with pytest.raises(ValueError):
        model(np.zeros((15, 2)))
    with pytest.raises(ValueError):
        model(np.zeros((16, 3)))
    with pytest.raises(ValueError):
        ForecastModel(CFG, "automatic")


def test_seeded_construction_is_reproducible():
    a, b = ForecastModel(CFG, seed=9), ForecastModel(CFG, seed=9)
    for (na, pa), (nb, pb) in zip(a.parameters().items(), b.parameters().items()):
        assert na == nb and np.array_equal(pa.data, pb.data)
