"""Parameterized building blocks: linear maps, spectral norm, attention, feed-forward."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .optim import ParamStore

NEG_INF = -1e9


@lru_cache(maxsize=32)
def _sinusoid(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    pe.setflags(write=False)
    return pe


def positional_encoding(length: int, d: int, dtype=np.float64) -> np.ndarray:
    return _sinusoid(length, d).astype(dtype)


def spectral_normalize(w: Tensor, u: np.ndarray, v: np.ndarray, n_power_iters: int = 1,
                       update: bool = True, eps: float = 1e-12) -> tuple[Tensor, float]:
    """Divide ``w`` by its power-iteration estimate of the top singular value.

    ``u`` (rows) and ``v`` (columns) are the persistent iteration vectors and are
    updated in place unless ``update`` is False. Gradients flow through the
    estimate with ``u`` and ``v`` held constant.
    """
    if n_power_iters < 1:
        raise ValueError("n_power_iters must be >= 1")
    mat = w.data.astype(np.float64)
    uu, vv = u.astype(np.float64), v.astype(np.float64)
    for _ in range(n_power_iters):
        vv = mat.T @ uu
        vv /= max(np.linalg.norm(vv), eps)
        uu = mat @ vv
        uu /= max(np.linalg.norm(uu), eps)
    if update:
        u[...] = uu
        v[...] = vv
    outer = np.outer(uu, vv).astype(w.dtype)
    sigma = (w * outer).sum()
    if abs(float(sigma.data)) < eps:
        return w * 0.0, 0.0
    return w / sigma, float(sigma.data)


class Linear:
    def __init__(self, store: ParamStore, path: str, n_in: int, n_out: int,
                 rng: np.random.Generator, dtype=np.float64, bias: bool = True,
                 spectral: bool = False):
        scale = np.sqrt(2.0 / (n_in + n_out))
        self.path = path
        self.store = store
        self.w = store.add(f"{path}.w", (rng.standard_normal((n_in, n_out)) * scale).astype(dtype))
        self.b = store.add(f"{path}.b", np.zeros(n_out, dtype=dtype)) if bias else None
        self.spectral = spectral
        if spectral:
            u = rng.standard_normal(n_in)
            v = rng.standard_normal(n_out)
            store.buffers[f"{path}.sn_u"] = u / np.linalg.norm(u)
            store.buffers[f"{path}.sn_v"] = v / np.linalg.norm(v)
        self.update_sn = True
        self.n_power_iters = 1

    def weight(self) -> Tensor:
        if not self.spectral:
            return self.w
        w, _ = spectral_normalize(self.w, self.store.buffers[f"{self.path}.sn_u"],
                                  self.store.buffers[f"{self.path}.sn_v"],
                                  self.n_power_iters, update=self.update_sn)
        return w

    def __call__(self, x: Tensor) -> Tensor:
        y = ag.matmul(x, self.weight())
        return y + self.b if self.b is not None else y


class LayerNorm:
    def __init__(self, store: ParamStore, path: str, d: int, dtype=np.float64):
        self.gain = store.add(f"{path}.gain", np.ones(d, dtype=dtype))
        self.bias = store.add(f"{path}.bias", np.zeros(d, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return ag.layer_norm(x, self.gain, self.bias, 1e-5)


class MultiHeadAttention:
    def __init__(self, store: ParamStore, path: str, d: int, heads: int,
                 rng: np.random.Generator, dtype=np.float64, spectral: bool = False):
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.d, self.heads, self.dh = d, heads, d // heads
        mk = lambda name: Linear(store, f"{path}.{name}", d, d, rng, dtype, spectral=spectral)
        self.q, self.k, self.v, self.o = mk("q"), mk("k"), mk("v"), mk("o")
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.dh).transpose(0, 2, 1, 3)

    def project_kv(self, memory: Tensor) -> tuple[Tensor, Tensor]:
        return self._split(self.k(memory)), self._split(self.v(memory))

    def __call__(self, x: Tensor, memory: Tensor | None = None, key_mask: np.ndarray | None = None,
                 causal: bool = False, kv: tuple[Tensor, Tensor] | None = None) -> Tensor:
        b, n, _ = x.shape
        q = self._split(self.q(x))
        k, v = kv if kv is not None else self.project_kv(x if memory is None else memory)
        scores = ag.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.dh))
        m = k.shape[2]
        bias = np.zeros((b, 1, n, m), dtype=x.dtype)
        if key_mask is not None:
            bias = bias + np.where(key_mask[:, None, None, :], 0.0, NEG_INF).astype(x.dtype)
        if causal:
            tri = np.triu(np.ones((n, m), dtype=bool), k=m - n + 1)
            bias = bias + np.where(tri, NEG_INF, 0.0).astype(x.dtype)[None, None]
        weights = ag.softmax(scores + bias, axis=-1)
        self.last_weights = weights.data
        out = ag.matmul(weights, v).transpose(0, 2, 1, 3).reshape(b, n, self.d)
        return self.o(out)


class FeedForward:
    def __init__(self, store: ParamStore, path: str, d: int, d_ff: int,
                 rng: np.random.Generator, dtype=np.float64, spectral: bool = False,
                 activation=ag.relu):
        self.fc1 = Linear(store, f"{path}.fc1", d, d_ff, rng, dtype, spectral=spectral)
        self.fc2 = Linear(store, f"{path}.fc2", d_ff, d, rng, dtype, spectral=spectral)
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.activation(self.fc1(x)))


class SelfAttentionBlock:
    """Pre-norm residual block: self-attention then feed-forward."""

    def __init__(self, store: ParamStore, path: str, d: int, heads: int, d_ff: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.norm1 = LayerNorm(store, f"{path}.norm1", d, dtype)
        self.attn = MultiHeadAttention(store, f"{path}.attn", d, heads, rng, dtype)
        self.norm2 = LayerNorm(store, f"{path}.norm2", d, dtype)
        self.ff = FeedForward(store, f"{path}.ff", d, d_ff, rng, dtype)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x), key_mask=key_mask)
        return x + self.ff(self.norm2(x))


class DecoderBlock:
    def __init__(self, store: ParamStore, path: str, d: int, heads: int, d_ff: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.norm1 = LayerNorm(store, f"{path}.norm1", d, dtype)
        self.self_attn = MultiHeadAttention(store, f"{path}.self_attn", d, heads, rng, dtype)
        self.norm2 = LayerNorm(store, f"{path}.norm2", d, dtype)
        self.cross_attn = MultiHeadAttention(store, f"{path}.cross_attn", d, heads, rng, dtype)
        self.norm3 = LayerNorm(store, f"{path}.norm3", d, dtype)
        self.ff = FeedForward(store, f"{path}.ff", d, d_ff, rng, dtype)

    def __call__(self, x: Tensor, self_mask: np.ndarray, memory_mask: np.ndarray,
                 memory_kv: tuple[Tensor, Tensor]) -> Tensor:
        x = x + self.self_attn(self.norm1(x), key_mask=self_mask, causal=True)
        x = x + self.cross_attn(self.norm2(x), key_mask=memory_mask, kv=memory_kv)
        return x + self.ff(self.norm3(x))
