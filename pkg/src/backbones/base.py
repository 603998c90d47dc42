from dataclasses import dataclass

import numpy as np

from src.core.tensor import Tensor, batch_major, time_major
from src.errors import ContractError, DimensionError


@dataclass
class ModelParams:
    """Trainable parameters of one backbone, keyed by name."""

    kind: str
    lookback: int
    horizon: int
    tensors: dict[str, Tensor]
    sma_kernel: int | None = None

    @property
    def names(self) -> list[str]:
        return sorted(self.tensors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: self.tensors[name].data for name in self.names}

    @property
    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.tensors[name].data.ravel() for name in self.names])

    def replace(self, arrays: dict[str, np.ndarray]) -> "ModelParams":
        """New leaves holding `arrays`; the old tensors stay untouched."""
        if set(arrays) != set(self.tensors):
            raise ContractError(f"parameter keys {sorted(arrays)} do not match {self.names}")
        tensors = {name: Tensor(arrays[name], requires_grad=True, name=name) for name in self.names}
        return ModelParams(self.kind, self.lookback, self.horizon, tensors, self.sma_kernel)

    def constants(self) -> "ModelParams":
        """Same values as non-differentiable tensors, for graph-free inference."""
        tensors = {name: t.detach() for name, t in self.tensors.items()}
        return ModelParams(self.kind, self.lookback, self.horizon, tensors, self.sma_kernel)

    def collect(self, grads: dict[Tensor, np.ndarray]) -> dict[str, np.ndarray]:
        """Name the gradients returned by `backward`; unreached parameters get zeros."""
        return {
            name: np.asarray(grads.get(tensor, np.zeros(tensor.shape)))
            for name, tensor in self.tensors.items()
        }


class BaseBackbone:
    kind: str = ""
    # prefixes of the [F, T] maps this backbone owns
    maps: tuple[str, ...] = ()

    def __init__(self, params: ModelParams):
        if params.kind != self.kind:
            raise ContractError(f"{type(self).__name__} cannot run {params.kind!r} parameters")
        self.params = params

    @classmethod
    def init(cls, lookback: int, horizon: int, seed: int, **options) -> ModelParams:
        if lookback < 1 or horizon < 1:
            raise DimensionError(f"lookback and horizon must be positive, got {lookback}, {horizon}")
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(lookback)
        tensors: dict[str, Tensor] = {}
        for prefix in cls.maps:
            weight, bias = cls._names(prefix)
            tensors[weight] = Tensor(
                rng.uniform(-bound, bound, size=(horizon, lookback)), requires_grad=True, name=weight
            )
            tensors[bias] = Tensor(np.zeros(horizon), requires_grad=True, name=bias)
        return ModelParams(cls.kind, lookback, horizon, tensors, options.get("sma_kernel"))

    @staticmethod
    def _names(prefix: str) -> tuple[str, str]:
        if not prefix:
            return "weight", "bias"
        return f"{prefix}.weight", f"{prefix}.bias"

    def _linear_map(self, prefix: str, x: Tensor) -> Tensor:
        # One [F, T] map shared by every channel: y[b, :, n] = W x[b, :, n] + bias.
        weight, bias = (self.params.tensors[n] for n in self._names(prefix))
        batch, _, channels = x.shape
        out = weight @ time_major(x) + bias.reshape(self.params.horizon, 1)
        return batch_major(out, batch, channels)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.params.lookback:
            raise DimensionError(
                f"expected input [B, {self.params.lookback}, N], got shape {x.shape}"
            )
        return self._forward(x)

    def _forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError
