"""Self-attention generator and spectrally normalized discriminator over latent code sequences."""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .layers import (FeedForward, LayerNorm, Linear, MultiHeadAttention, SelfAttentionBlock,
                     positional_encoding)
from .optim import ParamStore
from .translation import LatentCode, spherical_normalize


def sample_z(batch: int, length: int, d_z: int, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    if batch < 1:
        raise ValueError("batch must be >= 1")
    return rng.standard_normal((batch, length, d_z)).astype(dtype)


class Generator:
    """Noise sequence -> unit-norm code sequence of length ``length``."""

    def __init__(self, d: int, d_z: int, length: int, heads: int = 4, n_blocks: int = 2,
                 seed: int | np.random.Generator = 0, dtype=np.float32):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.d, self.d_z, self.length = d, d_z, length
        self.dtype = np.dtype(dtype)
        self.store = ParamStore("generator")
        self.inp = Linear(self.store, "gen.in", d_z, d, rng, dtype)
        self.blocks = [SelfAttentionBlock(self.store, f"gen.{i}", d, heads, 4 * d, rng, dtype)
                       for i in range(n_blocks)]
        self.norm = LayerNorm(self.store, "gen.norm", d, dtype)
        self.out = Linear(self.store, "gen.out", d, d, rng, dtype)

    def sample_z(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        return sample_z(batch, self.length, self.d_z, rng, self.dtype)

    def __call__(self, z: np.ndarray | Tensor) -> LatentCode:
        z = z if isinstance(z, Tensor) else Tensor(z)
        h = self.inp(z) + positional_encoding(z.shape[1], self.d, self.dtype)
        for blk in self.blocks:
            h = blk(h)
        out = self.out(self.norm(h))
        mask = np.ones(z.shape[:2], dtype=bool)
        return spherical_normalize(LatentCode(out, mask))

    generate_codes = __call__


class Discriminator:
    """Two spectrally normalized self-attention sub-layers, masked mean pool, scalar head.

    No layer normalization: it would undo the Lipschitz bound the spectral norm provides.
    """

    def __init__(self, d: int, heads: int = 4, n_blocks: int = 2,
                 seed: int | np.random.Generator = 0, dtype=np.float32, slope: float = 0.2):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.d = d
        self.dtype = np.dtype(dtype)
        self.store = ParamStore("discriminator")
        self.inp = Linear(self.store, "dis.in", d, d, rng, dtype, spectral=True)
        self.attn = [MultiHeadAttention(self.store, f"dis.{i}.attn", d, heads, rng, dtype, spectral=True)
                     for i in range(n_blocks)]
        self.ff = [FeedForward(self.store, f"dis.{i}.ff", d, 2 * d, rng, dtype, spectral=True,
                               activation=lambda x: ag.leaky_relu(x, slope))
                   for i in range(n_blocks)]
        self.head = Linear(self.store, "dis.head", d, 1, rng, dtype, spectral=True)

    def linears(self) -> list[Linear]:
        out = [self.inp, self.head]
        for a, f in zip(self.attn, self.ff):
            out += [a.q, a.k, a.v, a.o, f.fc1, f.fc2]
        return out

    def set_power_iteration(self, n_iters: int = 1, update: bool = True) -> None:
        for lin in self.linears():
            lin.n_power_iters = n_iters
            lin.update_sn = update

    def __call__(self, code: LatentCode) -> Tensor:
        """Scores of shape ``(B,)``."""
        x = code.data
        mask = code.mask
        h = self.inp(x) + positional_encoding(x.shape[1], self.d, self.dtype)
        for attn, ff in zip(self.attn, self.ff):
            h = h + attn(h, key_mask=mask)
            h = h + ff(h)
        w = (mask / mask.sum(axis=1, keepdims=True)).astype(self.dtype)[..., None]
        pooled = (h * w).sum(axis=1)
        return self.head(pooled).reshape(-1)

    discriminate = __call__


def d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """Minimized hinge objective: mean(relu(1 - real)) + mean(relu(1 + fake))."""
    real_scores, fake_scores = ag.as_tensor(real_scores), ag.as_tensor(fake_scores)
    if real_scores.data.size == 0 or fake_scores.data.size == 0:
        raise ValueError("d_loss needs nonempty score batches")
    return ag.relu(1.0 - real_scores).mean() + ag.relu(1.0 + fake_scores).mean()


def g_loss(fake_scores: Tensor) -> Tensor:
    fake_scores = ag.as_tensor(fake_scores)
    if fake_scores.data.size == 0:
        raise ValueError("g_loss needs a nonempty score batch")
    return -fake_scores.mean()
