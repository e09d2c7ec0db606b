"""A small reverse-mode autodiff core over float64 numpy arrays.

Only the operations the graph networks need are provided. Every op records its
parents and a closure that pushes the output gradient back to them;
``Tensor.backward`` replays the closures in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from . import _accel


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        # out-of-place so gradient buffers may be shared between parents
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self, seed: np.ndarray | None = None) -> None:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data) if seed is None else seed)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor(a.data + b.data, _parents=(a, b), _backward=back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor(a.data - b.data, _parents=(a, b), _backward=back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor(a.data * b.data, _parents=(a, b), _backward=back)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor(a.data @ b.data, _parents=(a, b), _backward=back)


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data**exponent

    def back(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return Tensor(out, _parents=(a,), _backward=back)


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)

    def back(g):
        a._accumulate(g * s * (1.0 - s))

    return Tensor(s, _parents=(a,), _backward=back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g):
        a._accumulate(g * mask)

    return Tensor(a.data * mask, _parents=(a,), _backward=back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def back(g):
        a._accumulate(g.reshape(a.shape))

    return Tensor(a.data.reshape(shape), _parents=(a,), _backward=back)


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Rows ``a[index]``; the backward pass scatter-adds."""
    n = a.shape[0]

    def back(g):
        a._accumulate(_accel.scatter_add(g, index, n))

    return Tensor(a.data[index], _parents=(a,), _backward=back)


def scatter_add(a: Tensor, index: np.ndarray, n_out: int) -> Tensor:
    """Sum rows of ``a`` into ``n_out`` buckets given by ``index``."""

    def back(g):
        a._accumulate(g[index])

    return Tensor(_accel.scatter_add(a.data, index, n_out), _parents=(a,), _backward=back)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            p._accumulate(piece)

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), _parents=tuple(parts), _backward=back)


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return Tensor(a.data.sum(), _parents=(a,), _backward=back)


def mean_squared_error(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred.data - target
    n = diff.size

    def back(g):
        pred._accumulate(g * 2.0 * diff / n)

    return Tensor(np.mean(diff * diff), _parents=(pred,), _backward=back)


def weighted_aggregate(h: Tensor, norm: Tensor, src: np.ndarray, dst: np.ndarray, n_out: int) -> Tensor:
    """Edge-weighted neighbour sum ``out[dst[e]] += norm[e] * h[src[e]]``."""

    def back(g):
        dh, dnorm = _accel.weighted_aggregate_backward(g, h.data, norm.data, src, dst)
        h._accumulate(dh)
        norm._accumulate(dnorm)

    out = _accel.weighted_aggregate(h.data, norm.data, src, dst, n_out)
    return Tensor(out, _parents=(h, norm), _backward=back)


def gated_aggregate(proj: Tensor, src: np.ndarray, dst: np.ndarray, n_out: int) -> Tensor:
    """Gated neighbour sum over ``proj = [value | key | query]`` (width 3d -> d)."""

    out, gate = _accel.gated_aggregate(proj.data, src, dst, n_out)

    def back(g):
        proj._accumulate(_accel.gated_aggregate_backward(g, proj.data, gate, src, dst))

    return Tensor(out, _parents=(proj,), _backward=back)
