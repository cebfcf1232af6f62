"""Tape-based reverse-mode differentiation over float64 numpy buffers.

The graph is rebuilt on every forward pass. Each op records its parents and a
closure that maps the output gradient to parent gradients; ``Tensor.backward``
walks the tape in reverse topological order. Inside ``no_grad()`` nothing is
recorded, which is what rollouts and evaluation use.
"""

from __future__ import annotations

import contextlib
import itertools
import math
from typing import Callable, Sequence

import numpy as np

from . import kernels

_GRAD_ENABLED = True
_ids = itertools.count()


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "node_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.node_id = next(_ids)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node._parents:
                if p.node_id not in seen and p.requires_grad:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {self.node_id: np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(parent.node_id)
                grads[parent.node_id] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.node_id = next(_ids)
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        return _make(a.data * c, (a,), lambda g: (g * c,))
    a = as_tensor(a)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU (smooth everywhere, so finite differences stay tight)."""
    xd = x.data
    u = _GELU_C * (xd + 0.044715 * xd ** 3)
    t = np.tanh(u)
    y = 0.5 * xd * (1.0 + t)

    def back(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _make(y, (x,), back)


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    return _make(np.where(keep, x.data, 0.0), (x,), lambda g: (g * keep,))


# ------------------------------------------------------------------ reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.asarray(y), (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


# --------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast as in numpy."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        if ga is not None:
            ga = _unbroadcast(ga, ad.shape)
        if gb is not None:
            gb = _unbroadcast(gb, bd.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b) with the leading axes of x flattened into one gemm."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear shape mismatch: {x.shape} @ {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    wd = w.data
    y = x2 @ wd
    if b is not None:
        y = y + b.data
    out_shape = lead + (wd.shape[1],)

    def back(g):
        g2 = g.reshape(-1, wd.shape[1])
        gx = (g2 @ wd.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y.reshape(out_shape), parents, back)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swap_last(x: Tensor) -> Tensor:
    return _make(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), back)


def _is_basic(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is None or k is Ellipsis for k in parts)


def getitem(x: Tensor, key) -> Tensor:
    shape = x.shape
    basic = _is_basic(key)

    def back(g):
        out = np.zeros(shape)
        if basic:
            out[key] += g
        else:
            np.add.at(out, key, g)
        return (out,)

    return _make(np.asarray(x.data[key]), (x,), back)


def take(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows of ``x`` (axis 0) selected by an integer array of any shape."""
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, index.reshape(-1), g.reshape((-1,) + shape[1:]))
        return (out,)

    return _make(x.data[index], (x,), back)


def gather_weighted(pool: Tensor, index: np.ndarray, weight: np.ndarray) -> Tensor:
    """out[r] = sum_j weight[r, j] * pool[index[r, j]] for a 2-D pool."""
    index = np.ascontiguousarray(index, dtype=np.int64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    if index.shape != weight.shape or index.ndim != 2:
        raise ShapeError(f"gather_weighted index/weight shapes {index.shape} vs {weight.shape}")
    rows = pool.shape[0]
    y = kernels.gather_weighted_fwd(np.ascontiguousarray(pool.data), index, weight)
    return _make(y, (pool,),
                 lambda g: (kernels.gather_weighted_bwd(np.ascontiguousarray(g), index, weight, rows),))


# ------------------------------------------------------------ normalisations

_NO_MASK = np.zeros((0, 0), dtype=np.uint8)


def _mask2d(mask, shape) -> np.ndarray:
    if mask is None:
        return _NO_MASK
    m = np.broadcast_to(np.asarray(mask, dtype=bool), shape)
    return np.ascontiguousarray(m.reshape(-1, shape[-1]), dtype=np.uint8)


def softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; ``mask`` (True = keep) zeroes excluded entries."""
    shape = x.shape
    x2 = np.ascontiguousarray(x.data.reshape(-1, shape[-1]))
    p = kernels.softmax_fwd(x2, _mask2d(mask, shape))

    def back(g):
        return (kernels.softmax_bwd(np.ascontiguousarray(g.reshape(p.shape)), p).reshape(shape),)

    return _make(p.reshape(shape), (x,), back)


def log_softmax(x: Tensor, mask=None) -> Tensor:
    """Masked log-softmax over the last axis; excluded entries hold -inf."""
    shape = x.shape
    x2 = np.ascontiguousarray(x.data.reshape(-1, shape[-1]))
    m2 = _mask2d(mask, shape)
    p = kernels.softmax_fwd(x2, m2)
    with np.errstate(divide="ignore"):
        y = np.log(p)
    if m2.shape[0]:
        y = np.where(m2.astype(bool), y, -np.inf)

    def back(g):
        g2 = np.where(np.isfinite(y), g.reshape(p.shape), 0.0).reshape(p.shape)
        return ((g2 - p * g2.sum(axis=1, keepdims=True)).reshape(shape),)

    return _make(y.reshape(shape), (x,), back)


def cross_entropy(logits: Tensor, target, mask=None, normalizer: float | None = None) -> Tensor:
    """Mean (or sum / normalizer) over rows of -log softmax(logits)[target].

    Rows whose target is -1 are skipped. ``mask`` restricts each row's support.
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    b, n = logits.shape
    target = np.asarray(target, dtype=np.int64).reshape(-1)
    if target.shape[0] != b:
        raise ShapeError(f"{b} logit rows but {target.shape[0]} targets")
    if np.any((target < -1) | (target >= n)):
        raise ValueError(f"cross_entropy target out of range [0, {n})")
    live = np.flatnonzero(target >= 0)
    if live.size == 0:
        raise ValueError("cross_entropy called with no live rows")
    x2 = np.ascontiguousarray(logits.data[live])
    m2 = _mask2d(None if mask is None else np.asarray(mask, dtype=bool)[live], x2.shape)
    t = target[live]
    if m2.shape[0] and not np.all(m2[np.arange(live.size), t]):
        raise ValueError("cross_entropy target lies outside the masked support")
    p = kernels.softmax_fwd(x2, m2)
    denom = float(live.size) if normalizer is None else float(normalizer)
    loss = -np.log(p[np.arange(live.size), t]).sum() / denom

    def back(g):
        gl = p.copy()
        gl[np.arange(live.size), t] -= 1.0
        out = np.zeros((b, n))
        out[live] = gl * (float(g) / denom)
        return (out,)

    return _make(np.asarray(loss), (logits,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    shape = x.shape
    if shape[-1] < 2:
        raise ShapeError("layer_norm needs a normalized axis of extent >= 2")
    x2 = np.ascontiguousarray(x.data.reshape(-1, shape[-1]))
    y, xhat, rstd = kernels.layer_norm_fwd(x2, gain.data, bias.data, eps)

    def back(g):
        gx, gg, gb = kernels.layer_norm_bwd(np.ascontiguousarray(g.reshape(y.shape)), xhat, rstd,
                                            gain.data)
        return gx.reshape(shape), gg, gb

    return _make(y.reshape(shape), (x, gain, bias), back)


# ------------------------------------------------------------------ attention

def attention(q: Tensor, k: Tensor, v: Tensor, mask=None, bias: Tensor | None = None) -> Tensor:
    """Scaled dot-product attention over the last two axes.

    q: [..., Lq, dk], k: [..., Lk, dk], v: [..., Lk, dv]. ``mask`` (True = key
    visible) broadcasts to [..., Lq, Lk]; ``bias`` is added to the logits.
    """
    qd, kd, vd = q.data, k.data, v.data
    scale = 1.0 / math.sqrt(qd.shape[-1])
    logits = (qd @ np.swapaxes(kd, -1, -2)) * scale
    if bias is not None:
        logits = logits + bias.data
    lshape = logits.shape
    p = kernels.softmax_fwd(np.ascontiguousarray(logits.reshape(-1, lshape[-1])),
                            _mask2d(mask, lshape)).reshape(lshape)
    out = p @ vd

    def back(g):
        gv = np.swapaxes(p, -1, -2) @ g
        gp = g @ np.swapaxes(vd, -1, -2)
        gl = kernels.softmax_bwd(np.ascontiguousarray(gp.reshape(-1, lshape[-1])),
                                 np.ascontiguousarray(p.reshape(-1, lshape[-1]))).reshape(lshape)
        gq = (gl @ kd) * scale
        gk = (np.swapaxes(gl, -1, -2) @ qd) * scale
        grads = [_unbroadcast(gq, qd.shape), _unbroadcast(gk, kd.shape), _unbroadcast(gv, vd.shape)]
        if bias is not None:
            grads.append(_unbroadcast(gl, bias.shape))
        return tuple(grads)

    parents = (q, k, v) if bias is None else (q, k, v, bias)
    return _make(out, parents, back)


def attention_weights(q: np.ndarray, k: np.ndarray, mask=None, bias: np.ndarray | None = None):
    """Attention probabilities only (no graph); used by invariant checks and traces."""
    logits = (q @ np.swapaxes(k, -1, -2)) / math.sqrt(q.shape[-1])
    if bias is not None:
        logits = logits + bias
    shape = logits.shape
    return kernels.softmax_fwd(np.ascontiguousarray(logits.reshape(-1, shape[-1])),
                               _mask2d(mask, shape)).reshape(shape)


# --------------------------------------------------------------- verification

def grad_check(f: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = 1e-5) -> float:
    """Max element-wise relative error between reverse-mode and central differences.

    ``f`` maps Tensors built from ``inputs`` to a scalar Tensor. The relative
    error of element i is |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * max|n|, 1e-8)
    with the max taken over all inputs, so components that are tiny relative
    to the whole gradient are judged on an absolute scale. The realised step (x+h)-(x-h) is used as denominator.
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = f(*ts)
    if out.data.size != 1:
        raise ShapeError("grad_check needs a scalar-valued function")
    out.backward()
    pairs = []
    for idx, a in enumerate(arrays):
        analytic = ts[idx].grad if ts[idx].grad is not None else np.zeros_like(a)
        numeric = np.zeros_like(a)
        flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = flat[j]
            with no_grad():
                fp = float(f(*[Tensor(x) for x in arrays]).data)
            flat[j] = orig - h
            down = flat[j]
            with no_grad():
                fm = float(f(*[Tensor(x) for x in arrays]).data)
            flat[j] = orig
            numeric.reshape(-1)[j] = (fp - fm) / (up - down)
        pairs.append((analytic, numeric))
    scale = max(float(np.abs(n).max(initial=0.0)) for _, n in pairs)
    floor = max(1e-3 * scale, 1e-8)
    worst = 0.0
    for analytic, numeric in pairs:
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        worst = max(worst, float((np.abs(analytic - numeric) / denom).max(initial=0.0)))
    return worst
