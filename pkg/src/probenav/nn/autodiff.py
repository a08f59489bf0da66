"""Reverse-mode automatic differentiation on float64 numpy arrays.

Tensors build a define-by-run graph: every operation records its parents and
a closure that routes the output gradient back to them. Calling
``backward(loss)`` on a scalar walks the graph once in reverse topological
order. All buffers are 64-bit floats in row-major order, and every operation
checks its output (and every backward closure its gradient) for NaN/Inf,
raising :class:`NonFiniteError` naming the offending operation.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "GraphError",
    "no_grad",
    "backward",
    "concat",
    "cross_entropy_with_index_labels",
]


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """A forward activation or backward gradient contained NaN/Inf."""


class GraphError(RuntimeError):
    """Backward invoked on a tensor with no recorded forward graph."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        self._prev = _grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return np.ascontiguousarray(arr)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a gradient back to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus optional gradient and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, op: str = "leaf"):
        self.data = _as_array(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------

    def detach(self) -> "Tensor":
        """A leaf view of the same values, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        if self.grad is not None and self.grad.shape == self.data.shape:
            self.grad.fill(0.0)
        else:
            self.grad = np.zeros_like(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method aliases ----------------------------------------------------

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def square(self):
        return square(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self):
        return transpose(self)

    @property
    def T(self):
        return transpose(self)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, op: str, parents: Sequence[Tensor],
          back: Callable[[np.ndarray], None]) -> Tensor:
    _check_finite(data, op)
    needs = _grad_enabled() and any(p.requires_grad or p._parents for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out.op = op
    if needs:
        out._parents = tuple(parents)
        out._backward = back
    else:
        out._parents = ()
        out._backward = None
    return out


def _route(parent: Tensor, grad: np.ndarray, op: str) -> None:
    _check_finite(grad, op + ".backward")
    parent._accumulate(grad)


# ---------------------------------------------------------------------------
# elementwise / broadcast arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data + b.data

    def back(g):
        _route(a, _unbroadcast(g, a.data.shape), "add")
        _route(b, _unbroadcast(g, b.data.shape), "add")

    return _make(data, "add", (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data - b.data

    def back(g):
        _route(a, _unbroadcast(g, a.data.shape), "sub")
        _route(b, _unbroadcast(-g, b.data.shape), "sub")

    return _make(data, "sub", (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data * b.data

    def back(g):
        _route(a, _unbroadcast(g * b.data, a.data.shape), "mul")
        _route(b, _unbroadcast(g * a.data, b.data.shape), "mul")

    return _make(data, "mul", (a, b), back)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def back(g):
        _route(a, _unbroadcast(g / b.data, a.data.shape), "div")
        _route(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape), "div")

    return _make(data, "div", (a, b), back)


def neg(a) -> Tensor:
    a = _coerce(a)

    def back(g):
        _route(a, -g, "neg")

    return _make(-a.data, "neg", (a,), back)


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def back(g):
        _route(a, g @ b.data.T, "matmul")
        _route(b, a.data.T @ g, "matmul")

    return _make(data, "matmul", (a, b), back)


def transpose(a) -> Tensor:
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {a.shape}")

    def back(g):
        _route(a, np.ascontiguousarray(g.T), "transpose")

    return _make(np.ascontiguousarray(a.data.T), "transpose", (a,), back)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    orig = a.data.shape
    data = a.data.reshape(shape)

    def back(g):
        _route(a, g.reshape(orig), "reshape")

    return _make(np.ascontiguousarray(data), "reshape", (a,), back)


def concat(tensors: Iterable[Tensor], axis: int = 1) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    splits = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

    def back(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            _route(t, np.ascontiguousarray(piece), "concat")

    return _make(data, "concat", ts, back)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def tanh(a) -> Tensor:
    a = _coerce(a)
    data = np.tanh(a.data)

    def back(g):
        _route(a, g * (1.0 - data * data), "tanh")

    return _make(data, "tanh", (a,), back)


def relu(a) -> Tensor:
    a = _coerce(a)
    data = np.maximum(a.data, 0.0)

    def back(g):
        _route(a, g * (a.data > 0.0), "relu")

    return _make(data, "relu", (a,), back)


def exp(a) -> Tensor:
    a = _coerce(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)

    def back(g):
        _route(a, g * data, "exp")

    return _make(data, "exp", (a,), back)


def log(a) -> Tensor:
    a = _coerce(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def back(g):
        _route(a, g / a.data, "log")

    return _make(data, "log", (a,), back)


def sqrt(a) -> Tensor:
    a = _coerce(a)
    with np.errstate(invalid="ignore"):
        data = np.sqrt(a.data)

    def back(g):
        _route(a, g * (0.5 / data), "sqrt")

    return _make(data, "sqrt", (a,), back)


def square(a) -> Tensor:
    a = _coerce(a)

    def back(g):
        _route(a, g * (2.0 * a.data), "square")

    return _make(a.data * a.data, "square", (a,), back)


def softplus(a) -> Tensor:
    a = _coerce(a)
    # log(1+e^x) computed stably for large |x|
    data = np.logaddexp(0.0, a.data)

    def back(g):
        sig = 1.0 / (1.0 + np.exp(-a.data))
        _route(a, g * sig, "softplus")

    return _make(data, "softplus", (a,), back)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _route(a, np.broadcast_to(g, a.data.shape).copy(), "sum")

    return _make(np.asarray(data, dtype=np.float64), "sum", (a,), back)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def back(g):
        g = np.asarray(g) / count
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _route(a, np.broadcast_to(g, a.data.shape).copy(), "mean")

    return _make(np.asarray(data, dtype=np.float64), "mean", (a,), back)


# ---------------------------------------------------------------------------
# softmax cross-entropy head
# ---------------------------------------------------------------------------


def cross_entropy_with_index_labels(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of ``logits`` rows against integer labels.

    Fused forward/backward: the gradient is (softmax - onehot) / N, which
    keeps the computation stable for strongly peaked logits.
    """
    logits = _coerce(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross entropy expects 2-D logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} logit rows")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeError("label index out of range")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    denom = expd.sum(axis=1, keepdims=True)
    logprob = shifted - np.log(denom)
    loss = -logprob[np.arange(n), labels].mean()

    def back(g):
        soft = expd / denom
        soft[np.arange(n), labels] -= 1.0
        _route(logits, (float(g) * soft) / n, "cross_entropy")

    return _make(np.asarray(loss, dtype=np.float64), "cross_entropy", (logits,), back)


# ---------------------------------------------------------------------------
# backward driver
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Populate gradients of every tensor reachable from ``loss``.

    ``loss`` must be a scalar produced by a recorded forward pass; leaf
    tensors (no graph) raise :class:`GraphError`.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss._backward is None and not loss._parents:
        raise GraphError("backward called before any forward pass was recorded")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
