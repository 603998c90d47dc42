"""Seasonal-trend decomposition along the time axis of [B, T, N] tensors.

Two smoothers are provided:

* EMA: the trend is the exponential moving average e_1 = x_1,
  e_t = a*x_t + (1-a)*e_{t-1}. It is computed in closed form as a weighted
  cumulative sum divided by a decaying divisor, and falls back to the
  recursion when that divisor would underflow.
* SMA: the trend is a centred moving average over a series padded with
  replicated edge values, as in the DLinear backbone.

In both cases the seasonal component is `x - trend`.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from src.core.tensor import ArrayLike, Function, Tensor, as_tensor
from src.errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

ALPHA_MIN = 0.001
ALPHA_MAX = 0.999

# Smallest closed-form divisor (1-a)^(T-1) still trusted.
UNDERFLOW_FLOOR = 1e-300

DEFAULT_SMA_KERNEL = 25


@dataclass(frozen=True)
class SmoothingFactor:
    """EMA weight on the newest observation, clamped to [ALPHA_MIN, ALPHA_MAX]."""

    alpha: float

    def __post_init__(self):
        value = float(self.alpha)
        if not math.isfinite(value):
            raise ContractError(f"smoothing factor must be finite, got {self.alpha!r}")
        clamped = min(max(value, ALPHA_MIN), ALPHA_MAX)
        if clamped != value:
            logger.warning(
                "alpha=%g clamped to %g (bounds [%g, %g])", value, clamped, ALPHA_MIN, ALPHA_MAX
            )
        object.__setattr__(self, "alpha", clamped)


@dataclass(frozen=True)
class DecompPair:
    seasonal: Tensor
    trend: Tensor


def _as_series_batch(x: Tensor | ArrayLike) -> Tensor:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"expected a [B, T, N] series batch, got shape {arr.shape}")
    if arr.shape[1] == 0:
        raise DimensionError("series batch has no time steps (T = 0)")
    return as_tensor(x)


def _smoothing(alpha: SmoothingFactor | float) -> SmoothingFactor:
    return alpha if isinstance(alpha, SmoothingFactor) else SmoothingFactor(alpha)


def ema_weights(steps: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form weights W and divisor D, each of length `steps`."""
    powers = np.power(1.0 - alpha, np.arange(steps - 1, -1, -1, dtype=np.float64))
    divisor = powers.copy()
    weights = powers.copy()
    weights[1:] *= alpha
    return weights, divisor


def closed_form_is_safe(steps: int, alpha: float) -> bool:
    return (1.0 - alpha) ** (steps - 1) >= UNDERFLOW_FLOOR


def ema_trend_closed_form(x: Tensor | ArrayLike, alpha: SmoothingFactor | float) -> Tensor:
    """trend = cumsum(x * W, dim=1) / D, with W and D broadcast as [1, T, 1]."""
    x = _as_series_batch(x)
    steps = x.shape[1]
    weights, divisor = ema_weights(steps, _smoothing(alpha).alpha)
    weighted = x * Tensor(weights.reshape(1, steps, 1))
    return weighted.cumsum(axis=1) / Tensor(divisor.reshape(1, steps, 1))


class EmaRecursion(Function):
    """The EMA recursion as a single graph node with a hand-written adjoint."""

    def forward(self, x: np.ndarray, alpha: float) -> np.ndarray:
        self.alpha = alpha
        out = np.empty_like(x)
        out[:, 0] = x[:, 0]
        for t in range(1, x.shape[1]):
            out[:, t] = alpha * x[:, t] + (1.0 - alpha) * out[:, t - 1]
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        alpha = self.alpha
        carry = np.empty_like(grad)
        carry[:, -1] = grad[:, -1]
        for t in range(grad.shape[1] - 2, -1, -1):
            carry[:, t] = grad[:, t] + (1.0 - alpha) * carry[:, t + 1]
        grad_x = alpha * carry
        grad_x[:, 0] = carry[:, 0]
        return (grad_x,)


def ema_trend_recursive(x: Tensor | ArrayLike, alpha: SmoothingFactor | float) -> Tensor:
    x = _as_series_batch(x)
    return EmaRecursion.apply(x, alpha=_smoothing(alpha).alpha)


def ema_decompose(x: Tensor | ArrayLike, alpha: SmoothingFactor | float) -> DecompPair:
    x = _as_series_batch(x)
    alpha = _smoothing(alpha)
    steps = x.shape[1]
    if closed_form_is_safe(steps, alpha.alpha):
        trend = ema_trend_closed_form(x, alpha)
    else:
        logger.debug("closed-form EMA divisor underflows for T=%d alpha=%g; using recursion", steps, alpha.alpha)
        trend = ema_trend_recursive(x, alpha)
    return DecompPair(seasonal=x - trend, trend=trend)


@lru_cache(maxsize=32)
def sma_window_indices(steps: int, kernel: int) -> np.ndarray:
    """
    [T, kernel] source positions of each centred window. Positions past either
    end are clipped, which is the same as padding with (kernel-1)/2 copies of the
    first and last values.
    """
    half = (kernel - 1) // 2
    positions = np.arange(steps)[:, None] + np.arange(-half, half + 1)[None, :]
    index = np.clip(positions, 0, steps - 1)
    index.flags.writeable = False
    return index


class MovingAverage(Function):
    def forward(self, x: np.ndarray, kernel: int) -> np.ndarray:
        self.index = sma_window_indices(x.shape[1], kernel)
        return x[:, self.index].mean(axis=2)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        kernel = self.index.shape[1]
        spread = np.broadcast_to(grad[:, :, None, :] / kernel, grad.shape[:2] + (kernel,) + grad.shape[2:])
        grad_x = np.zeros(self.tensors[0].shape)
        np.add.at(grad_x, (slice(None), self.index), spread)
        return (grad_x,)


def sma_decompose(x: Tensor | ArrayLike, kernel: int = DEFAULT_SMA_KERNEL) -> DecompPair:
    if kernel < 1 or kernel % 2 == 0:
        raise ContractError(f"SMA kernel must be a positive odd integer, got {kernel}")
    x = _as_series_batch(x)
    trend = MovingAverage.apply(x, kernel=kernel)
    return DecompPair(seasonal=x - trend, trend=trend)
