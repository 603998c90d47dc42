import numpy as np
import pytest

from src.core.decomp import ema_decompose
from src.core.losses import db_loss, mae, mse, mse_cross_term, objective
from src.core.tensor import Tensor, backward
from src.errors import ContractError, DimensionError, NumericError
from src.models.schemas import DbLossConfig
from tests.gradcheck import (
    RANDOM_INSTANCES,
    assert_gradients_match,
    assert_gradients_match_on_random_instances,
    away_from_zero,
    numeric_grad,
)


def series(values):
    return Tensor(np.asarray(values, dtype=float).reshape(1, -1, 1))


def test_mse_examples():
    assert mse(Tensor([1, 2]), Tensor([1, 2])).item() == 0.0
    assert mse(Tensor([1, 1]), Tensor([0, 2])).item() == 1.0


def test_mae_examples():
    assert mae(Tensor([3, 4]), Tensor([3, 4])).item() == 0.0
    assert mae(Tensor([1, 1]), Tensor([0, 3])).item() == 1.5
    assert mae(Tensor([2]), Tensor([0])).item() == 2.0


@pytest.mark.parametrize("fn", [mse, mae])
def test_pointwise_shape_mismatch(fn):
    with pytest.raises(DimensionError):
        fn(Tensor([1, 2, 3]), Tensor([1, 2]))


def test_db_loss_identical_inputs_are_zero():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 6, 3)))
    report = db_loss(x, x, DbLossConfig())
    assert report.as_floats()["total"] == 0.0
    assert report.seasonal_loss.item() == 0.0
    assert report.trend_loss.item() == 0.0


def test_db_loss_hand_example():
    cfg = DbLossConfig(alpha=0.5, beta=0.5, epsilon=1e-12)
    report = db_loss(series([1, 1]), series([0, 2]), cfg)
    assert report.seasonal_loss.item() == pytest.approx(0.5, rel=1e-12)
    assert report.trend_loss.item() == pytest.approx(0.5, rel=1e-12)
    assert report.alignment_ratio == pytest.approx(1.0, rel=1e-9)
    assert report.total.item() == pytest.approx(0.5, rel=1e-9)


def test_db_loss_endpoints():
    rng = np.random.default_rng(1)
    pred, target = Tensor(rng.normal(size=(2, 8, 3))), Tensor(rng.normal(size=(2, 8, 3)))
    seasonal_only = db_loss(pred, target, DbLossConfig(beta=1.0))
    assert seasonal_only.total.item() == pytest.approx(seasonal_only.seasonal_loss.item(), rel=1e-12)
    trend_only = db_loss(pred, target, DbLossConfig(beta=0.0))
    expected = trend_only.trend_loss.item() * trend_only.alignment_ratio
    assert trend_only.total.item() == pytest.approx(expected, rel=1e-12)


def test_db_loss_needs_rank_three_and_matching_shapes():
    with pytest.raises(DimensionError):
        db_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0]), DbLossConfig())
    with pytest.raises(DimensionError):
        db_loss(Tensor(np.zeros((1, 4, 2))), Tensor(np.zeros((1, 4, 3))), DbLossConfig())


def test_db_loss_overflow_names_component():
    pred = Tensor(np.array([1e200, -1e200, 1e200, -1e200]).reshape(1, 4, 1))
    target = Tensor(np.zeros((1, 4, 1)))
    with pytest.raises(NumericError, match="seasonal|trend"):
        db_loss(pred, target, DbLossConfig())


def _frozen_ratio_surrogate(target: Tensor, cfg: DbLossConfig, ratio: float):
    # db_loss with the alignment ratio held at a constant, for finite differences
    def fn(pred: Tensor) -> Tensor:
        report = db_loss(pred, target, cfg)
        return cfg.beta * report.seasonal_loss + (1.0 - cfg.beta) * ratio * report.trend_loss
    return fn


def _trend_error(pred: np.ndarray, target: np.ndarray, alpha: float) -> np.ndarray:
    return ema_decompose(pred, alpha).trend.values - ema_decompose(target, alpha).trend.values


def test_db_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    for index in range(RANDOM_INSTANCES):
        cfg = DbLossConfig(alpha=float(rng.uniform(0.05, 0.95)), beta=float(rng.uniform(0.0, 1.0)))
        target = rng.normal(size=(2, 8, 3))
        pred = rng.normal(size=(2, 8, 3))
        # abs is not differentiable where a trend error vanishes
        while np.min(np.abs(_trend_error(pred, target, cfg.alpha))) < 1e-4:
            pred = rng.normal(size=(2, 8, 3))
        leaf = Tensor(pred, requires_grad=True)
        report = db_loss(leaf, Tensor(target), cfg)
        analytic = backward(report.total)[leaf]

        numeric = numeric_grad(_frozen_ratio_surrogate(Tensor(target), cfg, report.alignment_ratio), pred)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7, err_msg=f"instance {index}")


def _pointwise_case(fn):
    def make(rng):
        target = rng.normal(size=(2, 4, 3))
        pred = target + away_from_zero(rng.normal(size=(2, 4, 3)))
        return (lambda p: fn(p, Tensor(target))), pred
    return make


@pytest.mark.parametrize("fn,seed", [(mse, 1), (mae, 2)])
def test_pointwise_loss_gradients_match_finite_differences(fn, seed):
    assert_gradients_match_on_random_instances(_pointwise_case(fn), seed=seed)



def test_seasonal_and_trend_terms_are_differentiable():
    rng = np.random.default_rng(7)
    target = Tensor(rng.normal(size=(1, 6, 2)))
    cfg = DbLossConfig(alpha=0.6)
    assert_gradients_match(lambda p: db_loss(p, target, cfg).seasonal_loss, rng.normal(size=(1, 6, 2)))


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.5, 1.0])
def test_detachment_contract(beta):
    rng = np.random.default_rng(int(beta * 10))
    x = Tensor(rng.normal(size=(3, 5, 2)))
    target = Tensor(rng.normal(size=(3, 4, 2)))
    weight = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    cfg = DbLossConfig(alpha=0.3, beta=beta)

    def report():
        pred = (weight @ x.transpose(1, 0, 2).reshape(5, 6)).reshape(4, 3, 2).transpose(1, 0, 2)
        return db_loss(pred, target, cfg)

    r = report()
    total = backward(r.total)[weight]
    seasonal = backward(report().seasonal_loss)[weight]
    trend = backward(report().trend_loss)[weight]
    expected = beta * seasonal + (1 - beta) * r.alignment_ratio * trend
    np.testing.assert_allclose(total, expected, rtol=1e-9, atol=1e-14)


def _level_gradient_direction(loss_name: str, seasonal_scale: float) -> np.ndarray:
    """
    Forecast = flat level per channel (trend parameters) + a pattern (seasonal
    parameters) evaluated at zero, the one series whose EMA trend is zero. The
    level gets no seasonal gradient, and the target's seasonal swing is scaled
    by `seasonal_scale`.
    """
    alpha, beta, horizon = 0.5, 0.5, 6
    level = Tensor(np.random.default_rng(21).normal(size=(1, 1, 2)), requires_grad=True)
    pattern = Tensor(np.zeros((1, horizon, 2)), requires_grad=True)
    pred = level * Tensor(np.ones((1, horizon, 1))) + pattern

    swing = np.array([0.0, 1.0, -1.0, 1.0, -1.0, 1.0]).reshape(1, horizon, 1) * np.array([1.0, -0.5])
    target = Tensor(10.0 + seasonal_scale * swing)

    if loss_name == "dbloss":
        # MAE only sees the sign of each trend error; the target stays above the level
        assert np.all(_trend_error(pred.values, target.values, alpha) < -1.0)
        loss = db_loss(pred, target, DbLossConfig(alpha=alpha, beta=beta)).total
    else:
        loss = mse(pred, target)
    grad = backward(loss)[level].ravel()
    return grad / np.linalg.norm(grad)


def test_seasonal_term_sends_no_gradient_to_level():
    level = Tensor([[[0.3, -1.2]]], requires_grad=True)
    pred = level * Tensor(np.ones((1, 6, 1))) + Tensor(np.zeros((1, 6, 2)))
    target = Tensor(np.random.default_rng(22).normal(size=(1, 6, 2)))
    seasonal = db_loss(pred, target, DbLossConfig(alpha=0.5)).seasonal_loss
    np.testing.assert_allclose(backward(seasonal)[level], 0.0, atol=1e-12)


def test_trend_gradient_direction_decoupled_under_db_loss():
    np.testing.assert_allclose(
        _level_gradient_direction("dbloss", 1.0), _level_gradient_direction("dbloss", 4.0), atol=1e-8
    )


def test_trend_gradient_direction_coupled_under_mse():
    shift = _level_gradient_direction("mse", 1.0) - _level_gradient_direction("mse", 4.0)
    assert np.linalg.norm(shift) > 1e-3


def test_cross_term_examples():
    split = mse_cross_term(Tensor([0.0]), Tensor([0.0]), Tensor([1.0]), Tensor([-1.0]))
    assert (split.ideal, split.cross) == (2.0, -2.0)
    assert split.ideal + split.cross == 0.0
    zero = mse_cross_term(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]), Tensor([0.0, 0.0]), Tensor([3.0, 4.0]))
    assert zero.cross == 0.0


def test_cross_term_identity_on_random_instances():
    rng = np.random.default_rng(4)
    for _ in range(20):
        parts = [rng.normal(size=(2, 5, 3)) for _ in range(4)]
        split = mse_cross_term(*(Tensor(p) for p in parts))
        total = np.sum(((parts[2] - parts[0]) + (parts[3] - parts[1])) ** 2)
        assert split.ideal + split.cross == pytest.approx(total, rel=1e-10)


def test_cross_term_shape_mismatch():
    with pytest.raises(DimensionError):
        mse_cross_term(Tensor([1.0]), Tensor([1.0]), Tensor([1.0, 2.0]), Tensor([1.0]))


@pytest.mark.parametrize("axis", [0, 2])
def test_db_loss_permutation_equivariant(axis):
    rng = np.random.default_rng(12)
    pred, target = rng.normal(size=(4, 7, 5)), rng.normal(size=(4, 7, 5))
    order = rng.permutation(pred.shape[axis])
    base = db_loss(Tensor(pred), Tensor(target), DbLossConfig()).as_floats()
    permuted = db_loss(
        Tensor(np.take(pred, order, axis=axis)), Tensor(np.take(target, order, axis=axis)), DbLossConfig()
    ).as_floats()
    for key, value in base.items():
        assert permuted[key] == pytest.approx(value, rel=1e-12, abs=1e-15)


def test_objective_dispatch():
    pred, target = Tensor(np.ones((1, 3, 1))), Tensor(np.zeros((1, 3, 1)))
    assert objective("mse", pred, target, DbLossConfig()).item() == 1.0
    assert objective("mae", pred, target, DbLossConfig()).item() == 1.0
    with pytest.raises(ContractError):
        objective("huber", pred, target, DbLossConfig())
