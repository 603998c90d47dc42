from src.core.decomp import DEFAULT_SMA_KERNEL, sma_decompose
from src.core.tensor import Tensor
from .base import BaseBackbone, ModelParams


class DLinearBackbone(BaseBackbone):
    """
    Decomposition-linear model: the input is split by a moving average into trend
    and seasonal parts, each part gets its own shared linear map, and the two
    forecasts are summed.
    """

    kind = "dlinear"
    maps = ("trend", "seasonal")

    @classmethod
    def init(cls, lookback: int, horizon: int, seed: int, **options) -> ModelParams:
        options.setdefault("sma_kernel", DEFAULT_SMA_KERNEL)
        return super().init(lookback, horizon, seed, **options)

    def _forward(self, x: Tensor) -> Tensor:
        parts = sma_decompose(x, self.params.sma_kernel or DEFAULT_SMA_KERNEL)
        return self._linear_map("trend", parts.trend) + self._linear_map("seasonal", parts.seasonal)
