"""Minimal reverse-mode differentiation over numpy arrays.

Each operation records its parents and a closure mapping the output
gradient to parent gradients. ``backward`` walks the recorded graph once in
reverse topological order.
"""
from __future__ import annotations

import contextlib

import numpy as np

_RECORD = True


class AutogradError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _RECORD
    prev, _RECORD = _RECORD, False
    try:
        yield
    finally:
        _RECORD = prev


class Tensor:
    __slots__ = ("data", "parents", "grad_fn", "name")

    def __init__(self, data, parents=(), grad_fn=None, name=None):
        self.data = np.asarray(data)
        self.parents = parents
        self.grad_fn = grad_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return mul(tsum(self, axis, keepdims), 1.0 / n)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fn):
    if _RECORD:
        return Tensor(data, parents, grad_fn)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.data.shape, b.data.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = g @ np.swapaxes(bd, -1, -2) if bd.ndim > 1 else np.multiply.outer(g, bd)
        gb = np.swapaxes(ad, -1, -2) @ g if ad.ndim > 1 else np.multiply.outer(ad, g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), grad_fn)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.data > 0
    return _make(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.data.shape

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), grad_fn)


def tmax(a, axis: int) -> Tensor:
    """Max over ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    ad = a.data
    idx = np.expand_dims(ad.argmax(axis=axis), axis)
    out = np.take_along_axis(ad, idx, axis).squeeze(axis)

    def grad_fn(g):
        full = np.zeros_like(ad)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis)
        return (full,)

    return _make(out, (a,), grad_fn)


def softmax(a, axis: int = -1, bias=None) -> Tensor:
    """Softmax of ``a + bias`` along ``axis``; ``bias`` is a constant array
    (use large negative entries to mask)."""
    a = as_tensor(a)
    z = a.data if bias is None else a.data + bias
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), grad_fn)


def log_softmax(a, axis: int = -1, bias=None) -> Tensor:
    a = as_tensor(a)
    z = a.data if bias is None else a.data + bias
    z = z - z.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def grad_fn(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), grad_fn)


def concat(items, axis: int = -1) -> Tensor:
    items = [as_tensor(t) for t in items]
    sizes = [t.data.shape[axis] for t in items]
    cuts = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in items], axis=axis), tuple(items), grad_fn)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.data.shape
    return _make(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, src),))


def take(a, index, axis: int) -> Tensor:
    """``a`` indexed along ``axis`` by one integer per leading batch row.

    ``index`` has shape ``a.shape[:axis]``; the axis is dropped.
    """
    a = as_tensor(a)
    ad = a.data
    idx = np.asarray(index).reshape(ad.shape[:axis] + (1,) + (1,) * (ad.ndim - axis - 1))
    idx = np.broadcast_to(idx, ad.shape[:axis] + (1,) + ad.shape[axis + 1:])
    out = np.take_along_axis(ad, idx, axis).squeeze(axis)

    def grad_fn(g):
        full = np.zeros_like(ad)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis)
        return (full,)

    return _make(out, (a,), grad_fn)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _make(np.minimum(a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(g * pick_a, a.data.shape),
                            _unbroadcast(g * ~pick_a, b.data.shape)))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def _topo(root: Tensor) -> list[Tensor]:
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, wrt) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to the tensors ``wrt``."""
    if not isinstance(loss, Tensor):
        raise AutogradError("backward needs a Tensor produced by a recorded forward pass")
    if loss.data.size != 1:
        raise AutogradError("backward needs a scalar loss")
    wrt = list(wrt)
    if loss.grad_fn is None and not any(t is loss for t in wrt):
        raise AutogradError("loss has no recorded graph (computed under no_grad or never run)")
    grads = {id(loss): np.ones_like(loss.data, dtype=float)}
    for node in reversed(_topo(loss)):
        g = grads.get(id(node))
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return [grads.get(id(t), np.zeros_like(t.data, dtype=float)).reshape(t.data.shape) for t in wrt]
