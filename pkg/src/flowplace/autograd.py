"""Small tape-based reverse-mode autodiff over float64 numpy arrays, plus Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Records differentiable ops in creation order; replays them backwards."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)

    def backward(self, loss: Tensor):
        if loss.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _record(out_data, parents, backward) -> Tensor:
    out = Tensor(out_data)
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        _ACTIVE[-1].nodes.append(out)
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _record(a.data + b.data, (a, b), bw)


def neg(a) -> Tensor:
    def bw(g):
        _accum(a, -g)
    return _record(-a.data, (a,), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))
    return _record(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)
    return _record(a.data @ b.data, (a, b), bw)


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"maximum shape mismatch {a.shape} vs {b.shape}")
    pick = a.data >= b.data

    def bw(g):
        _accum(a, np.where(pick, g, 0.0))
        _accum(b, np.where(pick, 0.0, g))
    return _record(np.where(pick, a.data, b.data), (a, b), bw)


def concat(tensors, axis=0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, cuts, axis=axis)):
            _accum(t, piece)
    return _record(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bw)


def _check_index(index, n):
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexError(f"index out of range for {n} rows")
    return index


def gather(x, index) -> Tensor:
    """Rows of x selected by index."""
    x = as_tensor(x)
    index = _check_index(index, x.shape[0])

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        _accum(x, out)
    return _record(x.data[index], (x,), bw)


def segment_sum(x, index, n_segments) -> Tensor:
    """Scatter-add rows of x into n_segments rows by index."""
    x = as_tensor(x)
    index = _check_index(index, n_segments)
    if index.shape[0] != x.shape[0]:
        raise ValueError("segment_sum needs one index per row")
    out = np.zeros((n_segments,) + x.shape[1:])
    np.add.at(out, index, x.data)

    def bw(g):
        _accum(x, g[index])
    return _record(out, (x,), bw)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def bw(g):
        _accum(x, g * (1.0 - y * y))
    return _record(y, (x,), bw)


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)

    def bw(g):
        _accum(x, g * y)
    return _record(y, (x,), bw)


def clip(x, lo, hi) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)

    def bw(g):
        _accum(x, np.where(inside, g, 0.0))
    return _record(np.clip(x.data, lo, hi), (x,), bw)


def sum_all(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        _accum(x, np.broadcast_to(g, x.shape).copy())
    return _record(np.array(x.data.sum()), (x,), bw)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = max(x.data.size, 1)

    def bw(g):
        _accum(x, np.full(x.shape, float(g) / n))
    return _record(np.array(x.data.sum() / n), (x,), bw)


def smooth_l1(pred, target, delta: float = 1.0) -> Tensor:
    """Mean Huber-style loss: 0.5 d^2 / delta inside |d| < delta, |d| - 0.5 delta outside."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"smooth_l1 shape mismatch {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    ad = np.abs(d)
    quad = ad < delta
    n = max(d.size, 1)
    val = np.where(quad, 0.5 * d * d / delta, ad - 0.5 * delta).sum() / n

    def bw(g):
        dg = np.where(quad, d / delta, np.sign(d)) * (float(g) / n)
        _accum(pred, dg)
        _accum(target, -dg)
    return _record(np.array(val), (pred, target), bw)


@dataclass
class AdamState:
    lr: float = 5e-5
    lr_decay: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def end_epoch(self):
        self.lr *= 1.0 - self.lr_decay


def adam_step(params: dict[str, Tensor], state: AdamState) -> None:
    """In-place Adam update with decoupled weight decay; missing grads count as zero."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
