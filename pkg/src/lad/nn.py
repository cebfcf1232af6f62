"""Parameter containers, initialisers and transformer building blocks.

Layers are plain functions over a :class:`ParamSet` and a dotted name prefix,
so one model definition can run against any parameter snapshot.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ConfigError(ValueError):
    """Invalid architecture or run configuration."""


class ParamSet:
    """Ordered name -> Tensor map. Iteration order is insertion order."""

    def __init__(self, version: int = 0):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self.version = version

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def num_values(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self, fill_missing: bool = True) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self._params.items():
            if t.grad is not None:
                out[name] = t.grad
            elif fill_missing:
                out[name] = np.zeros_like(t.data)
        return out

    def arrays(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((n, t.data) for n, t in self._params.items())

    def load_arrays(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        if strict:
            missing = [n for n in self._params if n not in arrays]
            extra = [n for n in arrays if n not in self._params]
            if missing or extra:
                raise KeyError(f"parameter mismatch; missing={missing} unexpected={extra}")
        for name, arr in arrays.items():
            if name not in self._params:
                continue
            t = self._params[name]
            if t.data.shape != tuple(arr.shape):
                raise ValueError(f"{name}: shape {arr.shape} != {t.data.shape}")
            t.data = np.array(arr, dtype=np.float64)

    def copy(self) -> "ParamSet":
        ps = ParamSet(self.version)
        for n, t in self._params.items():
            ps.add(n, t.data.copy())
        return ps


# ----------------------------------------------------------------- initialisers

def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def add_linear(ps: ParamSet, name: str, din: int, dout: int, rng: np.random.Generator) -> None:
    ps.add(f"{name}.w", xavier_uniform(rng, din, dout))
    ps.add(f"{name}.b", np.zeros(dout))


def add_embedding(ps: ParamSet, name: str, rows: int, dim: int, rng: np.random.Generator) -> None:
    ps.add(name, rng.normal(0.0, 0.02, size=(rows, dim)))


def add_norm(ps: ParamSet, name: str, dim: int) -> None:
    ps.add(f"{name}.g", np.ones(dim))
    ps.add(f"{name}.b", np.zeros(dim))


def add_attention(ps: ParamSet, name: str, dim: int, heads: int, rng: np.random.Generator,
                  kv_dim: int | None = None) -> None:
    if dim % heads:
        raise ConfigError(f"hidden size {dim} is not divisible by {heads} heads")
    kv_dim = dim if kv_dim is None else kv_dim
    add_linear(ps, f"{name}.q", dim, dim, rng)
    add_linear(ps, f"{name}.k", kv_dim, dim, rng)
    add_linear(ps, f"{name}.v", kv_dim, dim, rng)
    add_linear(ps, f"{name}.o", dim, dim, rng)


def add_ffn(ps: ParamSet, name: str, din: int, dhidden: int, dout: int, rng) -> None:
    add_linear(ps, f"{name}.l1", din, dhidden, rng)
    add_linear(ps, f"{name}.l2", dhidden, dout, rng)


# ---------------------------------------------------------------------- layers

def linear(ps: ParamSet, name: str, x: Tensor) -> Tensor:
    return T.linear(x, ps[f"{name}.w"], ps[f"{name}.b"])


def norm(ps: ParamSet, name: str, x: Tensor) -> Tensor:
    return T.layer_norm(x, ps[f"{name}.g"], ps[f"{name}.b"], eps=1e-5)


def ffn(ps: ParamSet, name: str, x: Tensor) -> Tensor:
    return linear(ps, f"{name}.l2", T.gelu(linear(ps, f"{name}.l1", x)))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, h = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, h // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, heads, n, dk = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, heads * dk))


def _expand_mask(mask, lq: int) -> np.ndarray | None:
    if mask is None:
        return None
    m = np.asarray(mask, dtype=bool)
    if m.ndim == 2:  # [B, Lk] key mask
        return m[:, None, None, :]
    if m.ndim == 3:  # [B, Lq, Lk]
        return m[:, None, :, :]
    raise ValueError(f"attention mask must be [B, Lk] or [B, Lq, Lk], got {m.shape}")


def attend(ps: ParamSet, name: str, xq: Tensor, xkv: Tensor, heads: int, mask=None,
           bias: Tensor | None = None) -> Tensor:
    """Multi-head attention on batched inputs xq [B, Lq, h], xkv [B, Lk, h_kv]."""
    dim = ps[f"{name}.q.w"].shape[1]
    if dim % heads:
        raise ConfigError(f"hidden size {dim} is not divisible by {heads} heads")
    q = _split_heads(linear(ps, f"{name}.q", xq), heads)
    k = _split_heads(linear(ps, f"{name}.k", xkv), heads)
    v = _split_heads(linear(ps, f"{name}.v", xkv), heads)
    ctx = T.attention(q, k, v, mask=_expand_mask(mask, xq.shape[1]), bias=bias)
    return linear(ps, f"{name}.o", _merge_heads(ctx))


def multi_head_attention(ps: ParamSet, name: str, q: Tensor, k: Tensor, v: Tensor | None = None,
                         mask=None, heads: int = 4) -> Tensor:
    """Unbatched convenience form: q [Lq, h], k/v [Lk, h] -> [Lq, h].

    ``k`` and ``v`` must be the same block (self/cross attention over one
    memory); ``mask`` is a boolean [Lk] or [Lq, Lk] array, True = visible.
    """
    if v is not None and v is not k:
        if not np.array_equal(v.data, k.data):
            raise ValueError("multi_head_attention projects keys and values from one memory block")
    mask_b = None if mask is None else np.asarray(mask, dtype=bool)[None]
    out = attend(ps, name, T.reshape(q, (1,) + q.shape), T.reshape(k, (1,) + k.shape), heads,
                 mask=mask_b)
    return T.reshape(out, out.shape[1:])


def add_encoder_layer(ps: ParamSet, name: str, dim: int, heads: int, ffn_dim: int, rng) -> None:
    add_norm(ps, f"{name}.ln1", dim)
    add_attention(ps, f"{name}.attn", dim, heads, rng)
    add_norm(ps, f"{name}.ln2", dim)
    add_ffn(ps, f"{name}.ffn", dim, ffn_dim, dim, rng)


def encoder_layer(ps: ParamSet, name: str, x: Tensor, heads: int, mask=None,
                  bias: Tensor | None = None) -> Tensor:
    """Pre-norm self-attention block."""
    y = norm(ps, f"{name}.ln1", x)
    x = x + attend(ps, f"{name}.attn", y, y, heads, mask=mask, bias=bias)
    return x + ffn(ps, f"{name}.ffn", norm(ps, f"{name}.ln2", x))


def add_decoder_layer(ps: ParamSet, name: str, dim: int, heads: int, ffn_dim: int, rng,
                      mem_dim: int | None = None) -> None:
    add_norm(ps, f"{name}.ln1", dim)
    add_attention(ps, f"{name}.self", dim, heads, rng)
    add_norm(ps, f"{name}.ln2", dim)
    add_attention(ps, f"{name}.cross", dim, heads, rng, kv_dim=mem_dim)
    add_norm(ps, f"{name}.ln3", dim)
    add_ffn(ps, f"{name}.ffn", dim, ffn_dim, dim, rng)


def decoder_layer(ps: ParamSet, name: str, x: Tensor, memory: Tensor, heads: int,
                  self_mask=None, mem_mask=None) -> Tensor:
    """Pre-norm block: self-attention, cross-attention onto ``memory``, FFN."""
    y = norm(ps, f"{name}.ln1", x)
    x = x + attend(ps, f"{name}.self", y, y, heads, mask=self_mask)
    x = x + attend(ps, f"{name}.cross", norm(ps, f"{name}.ln2", x), memory, heads, mask=mem_mask)
    return x + ffn(ps, f"{name}.ffn", norm(ps, f"{name}.ln3", x))
