import logging
from typing import Any, Sequence, Union

import numpy as np

from src.errors import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

# Divisors smaller than this in magnitude are rejected rather than divided by.
DIV_FLOOR = 1e-300


class Function:
    """
    A recorded operation in the differentiation graph.

    Each non-leaf `Tensor` keeps the `Function` that produced it as its `creator`.
    The function holds its operand tensors plus whatever its adjoint rule needs,
    so the graph is the set of creators reachable from a root. Operands always
    exist before the node that consumes them, which keeps the graph acyclic.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *args: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        """
        Map the gradient w.r.t. this node's output to gradients w.r.t. each operand.

        Returns one entry per operand, in operand order. `None` means "no gradient
        through this operand".
        """
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out = func.forward(*(t.data for t in tensors), **kwargs)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{cls.__name__} produced a non-finite value")
        requires_grad = any(t.requires_grad for t in tensors)
        return Tensor(out, creator=func if requires_grad else None, requires_grad=requires_grad)

    @staticmethod
    def unbroadcast(grad: np.ndarray, to_shape: tuple[int, ...]) -> np.ndarray:
        """Sum out the dimensions that were broadcast so `grad` matches `to_shape`."""
        if grad.shape == to_shape:
            return grad
        while grad.ndim > len(to_shape):
            grad = grad.sum(axis=0)
        for dim, extent in enumerate(to_shape):
            if extent == 1 and grad.shape[dim] != 1:
                grad = grad.sum(axis=dim, keepdims=True)
        return grad.reshape(to_shape)


class Tensor:
    """
    Dense float64 array that can take part in a reverse-mode differentiation graph.

    Leaves created with `requires_grad=True` are the trainable parameters; their
    gradients are what `backward` returns. Everything else is either a constant
    (no creator, no gradient) or an interior node with a `creator`.

    Values are read-only after construction.
    """

    def __init__(
        self,
        data: ArrayLike,
        creator: Function | None = None,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        arr = np.array(data, dtype=np.float64)
        if arr.size == 0:
            raise DimensionError(f"tensor extents must be positive, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor values must be finite")
        arr.flags.writeable = False
        self.data = arr
        self.creator = creator
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # arithmetic
    def __add__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Add.apply(self, as_tensor(other))

    def __radd__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Add.apply(as_tensor(other), self)

    def __sub__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Sub.apply(self, as_tensor(other))

    def __rsub__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Sub.apply(as_tensor(other), self)

    def __mul__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Mul.apply(self, as_tensor(other))

    def __rmul__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Mul.apply(as_tensor(other), self)

    def __truediv__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Div.apply(self, as_tensor(other))

    def __rtruediv__(self, other: Union["Tensor", float, int]) -> "Tensor":
        return Div.apply(as_tensor(other), self)

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return MatMul.apply(self, as_tensor(other))

    def abs(self) -> "Tensor":
        return Abs.apply(self)

    def square(self) -> "Tensor":
        return Square.apply(self)

    def cumsum(self, axis: int) -> "Tensor":
        return CumSum.apply(self, axis=axis)

    def mean(self) -> "Tensor":
        return Mean.apply(self)

    def sum(self) -> "Tensor":
        return Sum.apply(self)

    def reshape(self, *shape: int) -> "Tensor":
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes: int) -> "Tensor":
        return Transpose.apply(self, axes=axes)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    # Equal shapes, scalar operands, and same-rank singleton stretching
    # (the [1,T,1] against [B,T,N] pattern) only.
    if a == b:
        return a
    if int(np.prod(b)) == 1 and len(b) <= len(a):
        return a
    if int(np.prod(a)) == 1 and len(a) <= len(b):
        return b
    if len(a) == len(b):
        out = []
        for da, db in zip(a, b):
            if da != db and 1 not in (da, db):
                break
            out.append(max(da, db))
        else:
            return tuple(out)
    raise DimensionError(f"cannot broadcast shapes {a} and {b}")


class _Binary(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.out_shape = _broadcast_shape(x.shape, y.shape)
        return self._compute(x, y)

    def _compute(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _reduce(self, gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.tensors
        return (
            self.unbroadcast(np.broadcast_to(gx, self.out_shape), a.shape),
            self.unbroadcast(np.broadcast_to(gy, self.out_shape), b.shape),
        )


class Add(_Binary):
    def _compute(self, x, y):
        return x + y

    def backward(self, grad):
        return self._reduce(grad, grad)


class Sub(_Binary):
    def _compute(self, x, y):
        return x - y

    def backward(self, grad):
        return self._reduce(grad, -grad)


class Mul(_Binary):
    def _compute(self, x, y):
        return x * y

    def backward(self, grad):
        x, y = (t.data for t in self.tensors)
        return self._reduce(grad * y, grad * x)


class Div(_Binary):
    def _compute(self, x, y):
        if np.any(np.abs(y) < DIV_FLOOR):
            raise NumericError(f"division by a value with magnitude below {DIV_FLOOR:g}")
        return x / y

    def backward(self, grad):
        x, y = (t.data for t in self.tensors)
        return self._reduce(grad / y, -grad * x / (y * y))


class Abs(Function):
    def forward(self, x):
        return np.abs(x)

    def backward(self, grad):
        # np.sign(0) == 0 gives the zero subgradient at the kink
        return (grad * np.sign(self.tensors[0].data),)


class Square(Function):
    def forward(self, x):
        return x * x

    def backward(self, grad):
        return (2.0 * self.tensors[0].data * grad,)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class MatMul(Function):
    def forward(self, x, y):
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[0]:
            raise DimensionError(f"matmul needs [m,k] x [k,n], got {x.shape} x {y.shape}")
        return x @ y

    def backward(self, grad):
        x, y = (t.data for t in self.tensors)
        return grad @ y.T, x.T @ grad


class CumSum(Function):
    def forward(self, x, axis: int):
        if not -x.ndim <= axis < x.ndim:
            raise DimensionError(f"axis {axis} out of range for rank {x.ndim}")
        self.axis = axis
        return np.cumsum(x, axis=axis)

    def backward(self, grad):
        # suffix sums along the same axis
        flipped = np.flip(grad, axis=self.axis)
        return (np.flip(np.cumsum(flipped, axis=self.axis), axis=self.axis),)


class Mean(Function):
    def forward(self, x):
        return np.asarray(np.mean(x))

    def backward(self, grad):
        shape = self.tensors[0].shape
        return (np.full(shape, float(grad) / int(np.prod(shape))),)


class Sum(Function):
    def forward(self, x):
        return np.asarray(np.sum(x))

    def backward(self, grad):
        return (np.full(self.tensors[0].shape, float(grad)),)


class Reshape(Function):
    def forward(self, x, shape: tuple[int, ...]):
        try:
            return x.reshape(shape)
        except ValueError as exc:
            raise DimensionError(str(exc)) from exc

    def backward(self, grad):
        return (grad.reshape(self.tensors[0].shape),)


class Transpose(Function):
    def forward(self, x, axes: tuple[int, ...]):
        if sorted(axes) != list(range(x.ndim)):
            raise DimensionError(f"axes {axes} are not a permutation of rank {x.ndim}")
        self.axes = axes
        return np.transpose(x, axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


_ELEMENTWISE = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}
_UNARY = {"abs": Abs, "square": Square, "negate": Neg}


def elementwise(kind: str, a: Tensor, b: Union[Tensor, float, int]) -> Tensor:
    if kind not in _ELEMENTWISE:
        raise ContractError(f"unknown elementwise op {kind!r}, expected one of {sorted(_ELEMENTWISE)}")
    return _ELEMENTWISE[kind].apply(as_tensor(a), as_tensor(b))


def unary(kind: str, a: Tensor) -> Tensor:
    if kind not in _UNARY:
        raise ContractError(f"unknown unary op {kind!r}, expected one of {sorted(_UNARY)}")
    return _UNARY[kind].apply(as_tensor(a))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(as_tensor(a), as_tensor(b))


def cumsum(a: Tensor, axis: int) -> Tensor:
    return CumSum.apply(as_tensor(a), axis=axis)


def mean(a: Tensor) -> Tensor:
    return Mean.apply(as_tensor(a))


def detach(a: Tensor) -> Tensor:
    return as_tensor(a).detach()


def time_major(x: Tensor) -> Tensor:
    """[B, T, N] -> [T, B*N], one column per (batch element, channel) series."""
    batch, steps, channels = x.shape
    return x.transpose(1, 0, 2).reshape(steps, batch * channels)


def batch_major(y: Tensor, batch: int, channels: int) -> Tensor:
    """Inverse of `time_major`: [T, B*N] -> [B, T, N]."""
    return y.reshape(y.shape[0], batch, channels).transpose(1, 0, 2)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for operand in reversed(node.creator.tensors):
                if operand.requires_grad and id(operand) not in visited:
                    stack.append((operand, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """
    Reverse-mode sweep from a scalar root.

    Returns the gradient of `root` w.r.t. every reachable leaf that requires a
    gradient, keyed by the leaf tensor itself. Gradients reaching a node along
    several paths are summed. A root that does not depend on any such leaf yields
    an empty map.
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return {}

    pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    for node in reversed(_topological_order(root)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.creator is None:
            leaves[node] = grad
            continue
        for operand, operand_grad in zip(node.creator.tensors, node.creator.backward(grad)):
            if operand_grad is None or not operand.requires_grad:
                continue
            key = id(operand)
            pending[key] = pending[key] + operand_grad if key in pending else operand_grad
    return leaves
