"""Shared-encoder / shared-decoder transformer: denoising reconstruction and back-translation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .layers import DecoderBlock, LayerNorm, SelfAttentionBlock, positional_encoding
from .optim import ParamStore
from .text import BOS, EOS, PAD, UNK, Batch, NoiseConfig, Sentence, apply_noise, pad_batch


@dataclass
class LatentCode:
    """Batch of code sequences ``(B, L, d)`` with a validity mask ``(B, L)``."""

    data: Tensor
    mask: np.ndarray

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "LatentCode":
        return LatentCode(self.data.detach(), self.mask)

    def padded(self, length: int) -> "LatentCode":
        b, n, d = self.data.shape
        if n >= length:
            return self
        pad = Tensor(np.zeros((b, length - n, d), dtype=self.data.dtype))
        mask = np.concatenate([self.mask, np.zeros((b, length - n), dtype=bool)], axis=1)
        return LatentCode(ag.concat([self.data, pad], axis=1), mask)


def spherical_normalize(code: LatentCode, eps: float = 1e-8) -> LatentCode:
    """Unit-L2 rows; masked rows forced to zero."""
    out = ag.row_normalize(code.data, eps)
    return LatentCode(out * code.mask[..., None].astype(out.dtype), code.mask)


def add_code_noise(code: LatentCode, sigma: float, rng: np.random.Generator) -> LatentCode:
    """Add i.i.d. N(0, sigma^2) to unmasked rows."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return code
    noise = rng.standard_normal(code.data.shape) * sigma * code.mask[..., None]
    return LatentCode(code.data + noise.astype(code.data.dtype), code.mask)


def as_batch(x: Batch | Sentence | Sequence[Sentence]) -> Batch:
    if isinstance(x, Batch):
        return x
    if isinstance(x, Sentence):
        return pad_batch([x])
    return pad_batch(list(x))


@dataclass
class Translation:
    batch: Batch
    truncated: np.ndarray


class TranslationUnit:
    """One encoder and one language-conditioned decoder serving both languages.

    The token table is shared by encoder input, decoder input and the output
    projection. Only the decoder sees the language embedding.
    """

    def __init__(self, vocab_size: int, d: int = 64, n_layers: int = 2, heads: int = 4,
                 d_ff: int | None = None, max_len: int = 35, seed: int | np.random.Generator = 0,
                 dtype=np.float32, embeddings: np.ndarray | None = None,
                 embeddings_found: np.ndarray | None = None):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        d_ff = d_ff or 4 * d
        self.vocab_size, self.d, self.n_layers, self.heads = vocab_size, d, n_layers, heads
        self.max_len = max_len
        self.dtype = np.dtype(dtype)
        self.store = ParamStore("translation")
        # half the usual scale: the tied output otherwise favours the current input token
        table = rng.standard_normal((vocab_size, d)) * (0.5 * d ** -0.5)
        if embeddings is not None:
            found = embeddings_found if embeddings_found is not None else np.ones(vocab_size, bool)
            table[found] = embeddings[found]
        self.tokens = self.store.add("embed.tokens", table.astype(dtype))
        self.langs = self.store.add("embed.lang", (rng.standard_normal((2, d)) * d ** -0.5).astype(dtype))
        self.encoder = [SelfAttentionBlock(self.store, f"enc.{i}", d, heads, d_ff, rng, dtype)
                        for i in range(n_layers)]
        self.enc_norm = LayerNorm(self.store, "enc.norm", d, dtype)
        self.decoder = [DecoderBlock(self.store, f"dec.{i}", d, heads, d_ff, rng, dtype)
                        for i in range(n_layers)]
        self.dec_norm = LayerNorm(self.store, "dec.norm", d, dtype)

    # -- encoder ---------------------------------------------------------------------
    def _embed(self, ids: np.ndarray) -> Tensor:
        pe = positional_encoding(ids.shape[1], self.d, self.dtype)
        return ag.embedding(self.tokens, ids) * float(np.sqrt(self.d)) + pe

    def encode(self, x: Batch | Sentence | Sequence[Sentence], normalize: bool = True) -> LatentCode:
        """Encode a batch into a code sequence; rows are unit-normalized unless ``normalize`` is False."""
        batch = as_batch(x)
        ids = batch.ids
        if ids.shape[1] > self.max_len + 2:
            raise ValueError(f"input length {ids.shape[1]} exceeds bound {self.max_len + 2}")
        mask = ids != PAD
        h = self._embed(ids)
        for block in self.encoder:
            h = block(h, key_mask=mask)
        code = LatentCode(self.enc_norm(h), mask)
        return spherical_normalize(code) if normalize else code

    # -- decoder ---------------------------------------------------------------------
    def memory_kv(self, code: LatentCode) -> list[tuple[Tensor, Tensor]]:
        return [blk.cross_attn.project_kv(code.data) for blk in self.decoder]

    def decoder_hidden(self, code: LatentCode, inputs: np.ndarray, lang: int,
                       memory_kv: list | None = None) -> Tensor:
        if lang not in (1, 2):
            raise ValueError(f"language must be 1 or 2, got {lang}")
        kv = memory_kv if memory_kv is not None else self.memory_kv(code)
        h = self._embed(inputs) + self.langs[lang - 1]
        self_mask = inputs != PAD
        for blk, mkv in zip(self.decoder, kv):
            h = blk(h, self_mask, code.mask, mkv)
        return self.dec_norm(h)

    def output_logits(self, hidden: Tensor) -> Tensor:
        return ag.matmul(hidden, self.tokens.transpose())

    def decode_teacher_forced(self, code: LatentCode, target: Batch | Sentence | Sequence[Sentence],
                              lang: int) -> Tensor:
        """Logits ``(B, L_t - 1, V)`` predicting ``target[1:]`` from ``target[:-1]``."""
        tgt = as_batch(target)
        return self.output_logits(self.decoder_hidden(code, tgt.ids[:, :-1], lang))

    def sequence_loss(self, code: LatentCode, target: Batch, lang: int) -> Tensor:
        logits = self.decode_teacher_forced(code, target, lang)
        return ag.cross_entropy(logits, target.ids[:, 1:], PAD)

    # -- losses ------------------------------------------------------------------------
    def reconstruction_loss(self, x: Batch | Sentence | Sequence[Sentence], noise: NoiseConfig,
                            rng: np.random.Generator) -> Tensor:
        """Cross-entropy of reconstructing clean sentences from their noised encodings."""
        batch = as_batch(x)
        noised = pad_batch([apply_noise(s, noise, rng) for s in batch.sentences()], batch.lang)
        return self.sequence_loss(self.encode(noised), batch, batch.lang)

    def cross_domain_loss(self, x: Batch | Sentence | Sequence[Sentence],
                          rng: np.random.Generator | None = None) -> Tensor:
        """Back-translation loss: recover sentences from their current-model translation.

        ``rng`` is accepted for interface symmetry; greedy translation draws nothing.
        """
        batch = as_batch(x)
        other = 3 - batch.lang
        with no_grad():
            translated = self.translate(batch, other).batch
        fixed = [s if s.interior else Sentence.frame([UNK], other) for s in translated.sentences()]
        return self.sequence_loss(self.encode(pad_batch(fixed, other)), batch, batch.lang)

    # -- inference ----------------------------------------------------------------------
    def greedy_decode(self, code: LatentCode, lang: int, max_len: int | None = None) -> Translation:
        """Argmax decoding from BOS until EOS or ``max_len`` interior tokens."""
        max_len = self.max_len if max_len is None else max_len
        b = code.data.shape[0]
        with no_grad():
            kv = self.memory_kv(code)
            seqs = np.full((b, 1), BOS, dtype=np.int64)
            done = np.zeros(b, dtype=bool)
            truncated = np.zeros(b, dtype=bool)
            for step in range(max_len + 1):
                h = self.decoder_hidden(code, seqs, lang, kv)
                logits = self.output_logits(h[:, -1:, :]).data[:, 0, :].copy()
                logits[:, PAD] = -np.inf
                logits[:, BOS] = -np.inf
                nxt = logits.argmax(axis=-1)
                if step == max_len:
                    truncated = ~done & (nxt != EOS)
                    nxt = np.full(b, EOS)
                nxt = np.where(done, PAD, nxt)
                seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
                done |= nxt == EOS
                if done.all():
                    break
        sentences = []
        for row in seqs:
            end = int(np.argmax(row == EOS))
            sentences.append(Sentence([int(t) for t in row[: end + 1]], lang))
        return Translation(pad_batch(sentences, lang), truncated)

    def translate(self, x: Batch | Sentence | Sequence[Sentence], to_lang: int,
                  max_len: int | None = None) -> Translation:
        batch = as_batch(x)
        if to_lang == batch.lang:
            raise ValueError("translate: target language equals source language")
        with no_grad():
            code = self.encode(batch)
        return self.greedy_decode(code, to_lang, max_len)

    # -- bookkeeping -------------------------------------------------------------------
    def count_params(self) -> dict[str, int]:
        groups = {"embed.tokens": 0, "embed.lang": 0, "encoder": 0, "decoder": 0}
        for path, t in self.store:
            if path.startswith("embed."):
                groups[path] += t.data.size
            elif path.startswith("enc."):
                groups["encoder"] += t.data.size
            else:
                groups["decoder"] += t.data.size
        groups["total"] = sum(groups.values())
        # a single-language autoencoder of the same widths has no language table
        groups["monolingual"] = groups["total"] - groups["embed.lang"]
        return groups
