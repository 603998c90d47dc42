import numpy as np
import pytest

from src.backbones.factory import forward, init_params
from src.core.losses import mse
from src.core.tensor import Tensor, backward
from src.errors import ConfigError, ContractError, DimensionError
from tests.gradcheck import numeric_grad


def test_same_seed_same_parameters():
    a = init_params("dlinear", 16, 8, seed=7)
    b = init_params("dlinear", 16, 8, seed=7)
    np.testing.assert_array_equal(a.flatten(), b.flatten())
    c = init_params("dlinear", 16, 8, seed=8)
    assert not np.array_equal(a.flatten(), c.flatten())


@pytest.mark.parametrize("kind,lookback,horizon,count", [
    ("linear", 96, 96, 9312),
    ("dlinear", 96, 192, 37248),
])
def test_parameter_count(kind, lookback, horizon, count):
    assert init_params(kind, lookback, horizon, seed=1).count == count


def test_parameter_names():
    assert init_params("linear", 4, 2, seed=0).names == ["bias", "weight"]
    assert init_params("dlinear", 4, 2, seed=0).names == [
        "seasonal.bias", "seasonal.weight", "trend.bias", "trend.weight",
    ]


def test_unknown_kind():
    with pytest.raises(ConfigError):
        init_params("transformer", 4, 2, seed=0)


@pytest.mark.parametrize("kind", ["linear", "dlinear"])
def test_forward_shape(kind):
    params = init_params(kind, 16, 8, seed=3, sma_kernel=5)
    out = forward(params, np.random.default_rng(0).normal(size=(4, 16, 3)))
    assert out.shape == (4, 8, 3)


def test_forward_rejects_wrong_lookback():
    params = init_params("linear", 16, 8, seed=3)
    with pytest.raises(DimensionError):
        forward(params, np.zeros((2, 15, 3)))


def test_channels_share_one_map():
    params = init_params("linear", 6, 3, seed=2)
    column = np.random.default_rng(1).normal(size=(1, 6, 1))
    out = forward(params, np.concatenate([column, column], axis=2)).values
    np.testing.assert_array_equal(out[..., 0], out[..., 1])

def test_linear_identity_map_returns_input():
    params = init_params("linear", 5, 5, seed=0).replace({"weight": np.eye(5), "bias": np.zeros(5)})
    x = np.random.default_rng(10).normal(size=(3, 5, 2))
    np.testing.assert_array_equal(forward(params, x).values, x)


def test_dlinear_zero_weights_output_the_biases():
    params = init_params("dlinear", 12, 4, seed=0, sma_kernel=5)
    trend_bias, seasonal_bias = np.array([1.0, -2.0, 0.5, 3.0]), np.array([0.25, 0.0, -1.0, 2.0])
    params = params.replace({
        "trend.weight": np.zeros((4, 12)),
        "trend.bias": trend_bias,
        "seasonal.weight": np.zeros((4, 12)),
        "seasonal.bias": seasonal_bias,
    })
    out = forward(params, np.random.default_rng(11).normal(size=(3, 12, 2))).values
    expected = np.broadcast_to((trend_bias + seasonal_bias)[None, :, None], (3, 4, 2))
    np.testing.assert_array_equal(out, expected)


def test_dlinear_constant_input_uses_only_the_trend_map():
    rng = np.random.default_rng(12)
    params = init_params("dlinear", 30, 6, seed=4, sma_kernel=25)
    arrays = dict(params.arrays())
    arrays["trend.bias"], arrays["seasonal.bias"] = rng.normal(size=6), rng.normal(size=6)
    params = params.replace(arrays)
    c = -1.75
    out = forward(params, np.full((2, 30, 3), c)).values
    expected = arrays["trend.weight"] @ np.full(30, c) + arrays["trend.bias"] + arrays["seasonal.bias"]
    np.testing.assert_allclose(out, np.broadcast_to(expected[None, :, None], (2, 6, 3)), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("kind", ["linear", "dlinear"])
def test_permuting_channels_permutes_outputs(kind):
    rng = np.random.default_rng(13)
    params = init_params(kind, 16, 8, seed=6, sma_kernel=5)
    x = rng.normal(size=(2, 16, 5))
    order = rng.permutation(5)
    np.testing.assert_allclose(
        forward(params, x[:, :, order]).values, forward(params, x).values[:, :, order], rtol=1e-12, atol=1e-14
    )



def test_linear_kind_is_linear():
    params = init_params("linear", 10, 4, seed=5)
    rng = np.random.default_rng(6)
    x1, x2, a = rng.normal(size=(2, 10, 3)), rng.normal(size=(2, 10, 3)), 2.5
    # biases start at zero
    lhs = forward(params, a * x1 + x2).values
    rhs = a * forward(params, x1).values + forward(params, x2).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_dlinear_with_equal_maps_matches_linear():
    # trend map == seasonal map collapses to one map on trend + seasonal == x
    dl = init_params("dlinear", 9, 4, seed=1, sma_kernel=3)
    arrays = dl.arrays()
    arrays["seasonal.weight"] = arrays["trend.weight"]
    dl = dl.replace(arrays)
    lin = init_params("linear", 9, 4, seed=1)
    lin = lin.replace({"weight": arrays["trend.weight"], "bias": np.zeros(4)})
    x = np.random.default_rng(2).normal(size=(2, 9, 2))
    np.testing.assert_allclose(forward(dl, x).values, forward(lin, x).values, atol=1e-12)


@pytest.mark.parametrize("kind", ["linear", "dlinear"])
def test_parameter_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(2, 16, 3)), Tensor(rng.normal(size=(2, 8, 3)))
    params = init_params(kind, 16, 8, seed=9, sma_kernel=5)
    grads = params.collect(backward(mse(forward(params, x), y)))

    for name in params.names:
        def loss_of(value: Tensor, name=name):
            arrays = dict(params.arrays())
            arrays[name] = value.values
            return mse(forward(params.replace(arrays).constants(), x), y)
        expected = numeric_grad(loss_of, params.arrays()[name])
        np.testing.assert_allclose(grads[name], expected, rtol=1e-5, atol=1e-8)


def test_replace_rejects_key_mismatch():
    params = init_params("linear", 4, 2, seed=0)
    with pytest.raises(ContractError):
        params.replace({"weight": np.zeros((2, 4))})


def test_constants_detach_parameters():
    params = init_params("linear", 4, 2, seed=0).constants()
    out = forward(params, np.ones((1, 4, 1)))
    assert not out.requires_grad
    assert backward(out.sum()) == {}
