from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from typing import TYPE_CHECKING, Any

import numpy as np

from deskdet.exceptions import GradGraphError, GraphConsumedError, NonFiniteError, NonScalarLossError

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, DTypeLike

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_DEFAULT_DTYPE: ContextVar[np.dtype[Any]] = ContextVar("deskdet_default_dtype", default=np.dtype(np.float64))
_GRAD_ENABLED: ContextVar[bool] = ContextVar("deskdet_grad_enabled", default=True)


def get_default_dtype() -> np.dtype[Any]:
    return _DEFAULT_DTYPE.get()


@contextmanager
def default_dtype(dtype: DTypeLike) -> Iterator[None]:
    """Set the dtype new tensors are created with inside the block."""
    token = _DEFAULT_DTYPE.set(np.dtype(dtype))
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


class Tensor:
    """Dense n-dimensional array with optional reverse-mode gradient tracking.

    Storage is a row-major numpy array. Every op result is checked for NaN/Inf and
    records its parents and a backward closure when any parent requires a gradient.
    """

    __slots__ = ("_backward", "_graph", "_parents", "data", "grad", "op", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype: DTypeLike | None = None) -> None:
        array = np.asarray(data, dtype=dtype if dtype is not None else get_default_dtype())
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("tensor")
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._graph: GradGraph | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarLossError(self.shape)
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    @property
    def grad_graph(self) -> GradGraph:
        """Graph rooted at this tensor, built on first access and kept for later calls."""
        if self._graph is None:
            self._graph = GradGraph.from_loss(self)
        return self._graph

    def backward(self) -> None:
        """Run backward through the graph rooted at this tensor.

        Raises:
            GraphConsumedError: If the graph already ran and was not reset

        """
        backward(self.grad_graph, self)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{grad})"

    def __len__(self) -> int:
        return int(self.data.shape[0])

    # Arithmetic dispatches to the functional module.
    def __add__(self, other: Tensor | float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.add(self, other)

    def __radd__(self, other: float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.add(other, self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.sub(self, other)

    def __rsub__(self, other: float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.sub(other, self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.mul(self, other)

    def __rmul__(self, other: float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.mul(other, self)

    def __truediv__(self, other: Tensor | float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.div(self, other)

    def __rtruediv__(self, other: float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.div(other, self)

    def __neg__(self) -> Tensor:
        from deskdet.tensor import functional as F

        return F.neg(self)

    def __pow__(self, exponent: float) -> Tensor:
        from deskdet.tensor import functional as F

        return F.pow(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        from deskdet.tensor import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        from deskdet.tensor import functional as F

        return F.getitem(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        from deskdet.tensor import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        from deskdet.tensor import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        from deskdet.tensor import functional as F

        target = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return F.reshape(self, target)

    def transpose(self, *axes: int) -> Tensor:
        from deskdet.tensor import functional as F

        return F.transpose(self, axes or None)


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap an op output, checking finiteness and recording the graph edge when tracking is on."""
    data = np.asarray(data)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    track = is_grad_enabled() and any(parent.requires_grad for parent in parents)
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._backward = backward_fn if track else None
    out._graph = None
    return out


class GradGraph:
    """Topologically ordered record of the ops that produced a loss."""

    def __init__(self, nodes: list[Tensor], root: Tensor) -> None:
        self.nodes = nodes
        self.root = root
        self.consumed = False

    @classmethod
    def from_loss(cls, loss: Tensor) -> GradGraph:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if id(parent) not in visited)
        return cls(order, loss)

    @property
    def leaves(self) -> list[Tensor]:
        return [node for node in self.nodes if node.is_leaf and node.requires_grad]

    def reset(self) -> None:
        self.consumed = False


def backward(graph: GradGraph, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf of ``graph``.

    Args:
        graph: Graph built from ``loss``
        loss: Scalar tensor the graph is rooted at

    """
    if graph.consumed:
        raise GraphConsumedError
    if loss.size != 1:
        raise NonScalarLossError(loss.shape)
    if graph.root is not loss:
        msg = "loss is not the root of the given graph"
        raise GradGraphError(msg)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad), strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad
    graph.consumed = True
