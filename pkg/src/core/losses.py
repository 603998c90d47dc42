import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.core.decomp import ema_decompose
from src.core.tensor import Tensor, as_tensor, detach
from src.errors import ContractError, DimensionError, NumericError
from src.models.schemas import LOSS_NAMES, DbLossConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossReport:
    """
    Forward values of the decomposition loss.

    `total`, `seasonal_loss` and `trend_loss` are scalar graph nodes, so each can
    be differentiated on its own. `alignment_ratio` is the detached
    seasonal/trend scale factor applied to the trend term.
    """

    total: Tensor
    seasonal_loss: Tensor
    trend_loss: Tensor
    alignment_ratio: float

    def as_floats(self) -> dict[str, float]:
        return {
            "total": self.total.item(),
            "seasonal_loss": self.seasonal_loss.item(),
            "trend_loss": self.trend_loss.item(),
            "alignment_ratio": self.alignment_ratio,
        }


@dataclass(frozen=True)
class CrossTerm:
    ideal: float
    cross: float


def _same_shape(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match target shape {target.shape}")


def mse(pred: Tensor, target: Tensor) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape(pred, target)
    return (pred - target).square().mean()


def mae(pred: Tensor, target: Tensor) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape(pred, target)
    return (pred - target).abs().mean()


def _component(name: str, compute: Callable[[], Tensor]) -> Tensor:
    try:
        return compute()
    except NumericError as exc:
        raise NumericError(f"{name} loss is not finite: {exc}") from exc


def db_loss(pred: Tensor, target: Tensor, cfg: DbLossConfig) -> LossReport:
    """
    Seasonal/trend decomposition loss over the forecasting horizon.

    Both series are EMA-decomposed along axis 1. The seasonal parts are compared
    with mean squared error and the trend parts with mean absolute error. The
    trend term is rescaled by the detached ratio L_S / (L_T + eps), and the two
    terms are mixed as beta * L_S + (1 - beta) * L_T * ratio.
    """
    pred, target = as_tensor(pred), as_tensor(target)
    _same_shape(pred, target)
    if pred.ndim != 3:
        raise DimensionError(f"db_loss expects [B, F, N] tensors, got shape {pred.shape}")

    alpha = cfg.smoothing
    pred_parts = ema_decompose(pred, alpha)
    target_parts = ema_decompose(target, alpha)

    seasonal_loss = _component("seasonal", lambda: mse(pred_parts.seasonal, target_parts.seasonal))
    trend_loss = _component("trend", lambda: mae(pred_parts.trend, target_parts.trend))
    ratio = detach(seasonal_loss / (trend_loss + cfg.epsilon))

    total = _component(
        "total", lambda: cfg.beta * seasonal_loss + (1.0 - cfg.beta) * (trend_loss * ratio)
    )
    return LossReport(
        total=total,
        seasonal_loss=seasonal_loss,
        trend_loss=trend_loss,
        alignment_ratio=ratio.item(),
    )


def mse_cross_term(
    pred_trend: Tensor,
    pred_seasonal: Tensor,
    target_trend: Tensor,
    target_seasonal: Tensor,
) -> CrossTerm:
    """
    Split the summed squared error of (trend + seasonal) into its per-component
    part and the coupling part: sum((eT + eS)^2) = ideal + cross.
    """
    parts = [as_tensor(t) for t in (pred_trend, pred_seasonal, target_trend, target_seasonal)]
    if len({p.shape for p in parts}) != 1:
        raise DimensionError(f"all four components must share one shape, got {[p.shape for p in parts]}")
    pred_trend, pred_seasonal, target_trend, target_seasonal = (p.data for p in parts)
    e_trend = target_trend - pred_trend
    e_seasonal = target_seasonal - pred_seasonal
    return CrossTerm(
        ideal=float(np.sum(e_trend * e_trend) + np.sum(e_seasonal * e_seasonal)),
        cross=float(2.0 * np.sum(e_trend * e_seasonal)),
    )


def objective(name: str, pred: Tensor, target: Tensor, db: DbLossConfig) -> Tensor:
    """The scalar training objective selected by name."""
    if name == "mse":
        return mse(pred, target)
    if name == "mae":
        return mae(pred, target)
    if name == "dbloss":
        return db_loss(pred, target, db).total
    raise ContractError(f"unknown loss {name!r}, expected one of {', '.join(LOSS_NAMES)}")
