from src.core.tensor import Tensor, as_tensor
from src.errors import ConfigError
from .base import BaseBackbone, ModelParams
from .dlinear import DLinearBackbone
from .linear import LinearBackbone

BACKBONES: dict[str, type[BaseBackbone]] = {
    LinearBackbone.kind: LinearBackbone,
    DLinearBackbone.kind: DLinearBackbone,
}


def _backbone_class(kind: str) -> type[BaseBackbone]:
    try:
        return BACKBONES[kind]
    except KeyError:
        raise ConfigError(f"unknown model {kind!r}, expected one of {', '.join(BACKBONES)}") from None


def init_params(kind: str, lookback: int, horizon: int, seed: int, **options) -> ModelParams:
    return _backbone_class(kind).init(lookback, horizon, seed, **options)


def forward(params: ModelParams, x: Tensor) -> Tensor:
    return _backbone_class(params.kind)(params).forward(as_tensor(x))
