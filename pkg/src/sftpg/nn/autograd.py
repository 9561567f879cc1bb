"""Tape-based reverse-mode differentiation over dense numpy arrays.

Every op on a :class:`Tensor` that depends on a tracked input records its
parents and a closure that pushes the upstream gradient back to them. The
graph is rebuilt on every forward pass and dropped after :func:`backward`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # arithmetic -------------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    tracked = tuple(p for p in parents if p.requires_grad)
    if not tracked:
        return Tensor(data)
    return Tensor(data, True, parents, backward)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    # never updated in place, so aliasing the upstream array is safe
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


# elementwise ---------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = None

    def bw():
        _acc(a, out.grad)
        _acc(b, out.grad)

    out = _make(a.data + b.data, (a, b), bw)
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = None

    def bw():
        _acc(a, out.grad)
        _acc(b, -out.grad)

    out = _make(a.data - b.data, (a, b), bw)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = None

    def bw():
        _acc(a, out.grad * b.data)
        _acc(b, out.grad * a.data)

    out = _make(a.data * b.data, (a, b), bw)
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = None

    def bw():
        _acc(a, out.grad / b.data)
        _acc(b, -out.grad * a.data / (b.data * b.data))

    out = _make(a.data / b.data, (a, b), bw)
    return out


def square(a: Tensor) -> Tensor:
    out = None

    def bw():
        _acc(a, 2.0 * a.data * out.grad)

    out = _make(a.data * a.data, (a,), bw)
    return out


def sqrt(a: Tensor) -> Tensor:
    val = np.sqrt(a.data)
    out = None

    def bw():
        _acc(a, out.grad * 0.5 / val)

    out = _make(val, (a,), bw)
    return out


# activations ---------------------------------------------------------------
def relu(a: Tensor) -> Tensor:
    val = np.maximum(a.data, 0.0)
    out = None

    def bw():
        _acc(a, np.where(val > 0, out.grad, 0.0))  # subgradient 0 at the kink

    out = _make(val, (a,), bw)
    return out


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope)
    out = None

    def bw():
        _acc(a, out.grad * scale)

    out = _make(a.data * scale, (a,), bw)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)
    out = None

    def bw():
        _acc(a, out.grad * s * (1.0 - s))

    out = _make(s, (a,), bw)
    return out


def softplus_np(z: np.ndarray) -> np.ndarray:
    # much faster than np.logaddexp(0, z) and equally stable
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def softplus(a: Tensor) -> Tensor:
    out = None

    def bw():
        _acc(a, out.grad * expit(a.data))

    out = _make(softplus_np(a.data), (a,), bw)
    return out


# linear algebra / shape ----------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = None

    def bw():
        g = out.grad
        if a.requires_grad:
            _acc(a, g @ b.data.T)
        if b.requires_grad:
            _acc(b, a.data.T @ g)

    out = _make(a.data @ b.data, (a, b), bw)
    return out


def transpose(a: Tensor) -> Tensor:
    out = None

    def bw():
        _acc(a, out.grad.T)

    out = _make(a.data.T, (a,), bw)
    return out


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([p.data.shape[axis] for p in parts])[:-1]
    out = None

    def bw():
        for p, g in zip(parts, np.split(out.grad, sizes, axis=axis)):
            _acc(p, g)

    out = _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)
    return out


def getitem(a: Tensor, idx) -> Tensor:
    out = None

    def bw():
        g = np.zeros_like(a.data)
        np.add.at(g, idx, out.grad)
        _acc(a, g)

    out = _make(a.data[idx], (a,), bw)
    return out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = None

    def bw():
        g = out.grad
        if axis is not None:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.data.shape))

    out = _make(np.sum(a.data, axis=axis), (a,), bw)
    return out


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis) * (1.0 / n)


# driver --------------------------------------------------------------------
def _topo(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf.

    Interior nodes are released afterwards so the graph can be collected.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()
    for node in order:
        if node._parents:
            node.grad = None
            node._parents = ()
            node._backward = None
