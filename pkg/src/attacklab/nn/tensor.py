"""A minimal reverse-mode autodiff engine over float64 numpy arrays.

Only the handful of operations the learners need is implemented.  Every
operation appends to an implicit tape (the parent links of the produced
tensor); ``backward`` walks that tape once in reverse topological order and
accumulates gradients into the ``grad`` field of tensors created with
``requires_grad=True``.  All arrays are float64 and every operation validates
that its result is finite, so a diverging loss fails loudly at the op that
produced it instead of poisoning the parameters.
"""

from __future__ import annotations

import numpy as np


class NonFinite(Exception):
    """An operation produced NaN or Inf."""


class NotScalar(Exception):
    """backward() was called on a non-scalar tensor."""


class ShapeMismatch(Exception):
    """Operands have incompatible shapes."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw", "_needs")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _bw=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFinite("tensor holds non-finite entries")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._bw = _bw
        self._needs = requires_grad or any(p._needs for p in _parents)

    @property
    def shape(self):
        return self.data.shape

    # -- operators ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis: int | None = None):
        return tsum(self, axis)

    def mean(self):
        return mul(tsum(self, None), 1.0 / self.data.size)

    def reshape(self, *shape):
        return reshape(self, shape)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def _result(data, parents, bw) -> Tensor:
    needs = any(p._needs for p in parents)
    return Tensor(data, _parents=parents if needs else (), _bw=bw if needs else None)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ----------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(g, b.data.shape))

    return _result(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bw(g, acc):
        acc(a, _unbroadcast(g * b.data, a.data.shape))
        acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(a.data * b.data, (a, b), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g, acc):
        acc(a, g * mask)

    return _result(np.where(mask, a.data, 0.0), (a,), bw)


def elu(a: Tensor) -> Tensor:
    neg = np.exp(np.minimum(a.data, 0.0)) - 1.0
    out = np.where(a.data > 0, a.data, neg)

    def bw(g, acc):
        acc(a, g * np.where(a.data > 0, 1.0, neg + 1.0))

    return _result(out, (a,), bw)


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def bw(g, acc):
        acc(a, g * sign)

    return _result(np.abs(a.data), (a,), bw)


# -- structural -----------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    def bw(g, acc):
        acc(a, g.reshape(a.data.shape))

    return _result(a.data.reshape(shape), (a,), bw)


def tsum(a: Tensor, axis: int | None) -> Tensor:
    if axis is None:
        def bw(g, acc):
            acc(a, np.broadcast_to(g, a.data.shape).copy())

        return _result(a.data.sum(), (a,), bw)

    def bw(g, acc):
        acc(a, np.repeat(np.expand_dims(g, axis), a.data.shape[axis], axis=axis))

    return _result(a.data.sum(axis=axis), (a,), bw)


def stack_cols(ts: list[Tensor]) -> Tensor:
    """Stack (B,) tensors into a (B, len(ts)) matrix."""

    def bw(g, acc):
        for j, t in enumerate(ts):
            acc(t, g[:, j])

    return _result(np.stack([t.data for t in ts], axis=1), tuple(ts), bw)


def take_per_row(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select one entry per row of a (B, A) tensor; returns (B,)."""
    if a.data.ndim != 2:
        raise ShapeMismatch("take_per_row expects a matrix")
    rows = np.arange(a.data.shape[0])

    def bw(g, acc):
        out = np.zeros_like(a.data)
        np.add.at(out, (rows, idx), g)
        acc(a, out)

    return _result(a.data[rows, idx], (a,), bw)


# -- matrix products --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch("matmul expects 2-d operands")

    def bw(g, acc):
        acc(a, g @ b.data.T)
        acc(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: (B, i, k) @ (B, k, j) -> (B, i, j)."""
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise ShapeMismatch("bmm expects 3-d operands")

    def bw(g, acc):
        acc(a, g @ np.swapaxes(b.data, 1, 2))
        acc(b, np.swapaxes(a.data, 1, 2) @ g)

    return _result(a.data @ b.data, (a, b), bw)


# -- tape walk --------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d leaf into every requires_grad leaf on the tape."""
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar, got shape {loss.data.shape}")

    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited or not node._needs:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    def acc(t: Tensor, g: np.ndarray) -> None:
        if not t._needs:
            return
        key = id(t)
        if key in grads:
            grads[key] = grads[key] + g
        else:
            grads[key] = g

    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
        if node._bw is not None:
            node._bw(g, acc)
