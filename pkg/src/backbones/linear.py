from src.core.tensor import Tensor
from .base import BaseBackbone


class LinearBackbone(BaseBackbone):
    """A single lookback-to-horizon linear map shared across channels."""

    kind = "linear"
    maps = ("",)

    def _forward(self, x: Tensor) -> Tensor:
        return self._linear_map("", x)
