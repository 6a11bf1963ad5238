"""Generation metrics: per-hypothesis BLEU-N against a reference set, and LM perplexities."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor, no_grad
from .optim import ParamStore, adam_step, clip_grad_norm
from .text import tokenize

# -- BLEU -------------------------------------------------------------------------------


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


class References:
    """Reference set with per-order maximum n-gram counts precomputed."""

    def __init__(self, references: Iterable[Sequence[str]], max_order: int = 5):
        refs = [list(r) for r in references]
        if not refs:
            raise ValueError("need at least one reference")
        self.lengths = sorted({len(r) for r in refs})
        self.max_order = max_order
        self.max_counts: list[Counter] = []
        for n in range(1, max_order + 1):
            best: Counter = Counter()
            for r in refs:
                for g, c in ngrams(r, n).items():
                    if c > best[g]:
                        best[g] = c
            self.max_counts.append(best)

    def closest_length(self, c: int) -> int:
        return min(self.lengths, key=lambda r: (abs(r - c), r))


def bleu_n(hypothesis: Sequence[str], references, n: int = 4) -> float:
    """Sentence BLEU in [0, 100], uniform weights over orders 1..n, no smoothing."""
    if n < 1:
        raise ValueError("BLEU order must be >= 1")
    refs = references if isinstance(references, References) and references.max_order >= n \
        else References(references, n)
    hyp = list(hypothesis)
    if not hyp:
        return 0.0
    log_p = 0.0
    for k in range(1, n + 1):
        counts = ngrams(hyp, k)
        total = sum(counts.values())
        if total == 0:
            return 0.0
        clipped = sum(min(c, refs.max_counts[k - 1][g]) for g, c in counts.items())
        if clipped == 0:
            return 0.0
        log_p += math.log(clipped / total) / n
    c = len(hyp)
    r = refs.closest_length(c)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * bp * math.exp(log_p)


def generation_bleu(generated: Sequence[Sequence[str]], test_refs: Sequence[Sequence[str]],
                    n: int = 4) -> float:
    """Mean over generated sentences of BLEU-n against the whole test corpus."""
    if not generated:
        raise ValueError("no generated sentences")
    refs = References(test_refs, n)
    return float(np.mean([bleu_n(h, refs, n) for h in generated]))


# -- language model --------------------------------------------------------------------------
PAD_W, BOS_W, EOS_W, UNK_W = 0, 1, 2, 3


class WordVocab:
    def __init__(self, corpus: Iterable[Sequence[str]], max_size: int = 10000):
        counts = Counter(w for s in corpus for w in s)
        words = sorted(counts, key=lambda w: (-counts[w], w))[:max_size]
        self.itos = ["<pad>", "<s>", "</s>", "<unk>"] + words
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, sentence: Sequence[str]) -> list[int]:
        return [self.stoi.get(w, UNK_W) for w in sentence]


class LanguageModel(Protocol):
    def token_log_probs(self, corpus: Sequence[Sequence[str]]) -> np.ndarray:
        """Log-probability of every scored token (each word, then EOS) over the corpus."""


class UniformLM:
    def __init__(self, size: int):
        self.size = size

    def token_log_probs(self, corpus):
        n = sum(len(s) + 1 for s in corpus)
        return np.full(n, -math.log(self.size))


def perplexity(lm: LanguageModel, corpus: Sequence[Sequence[str]]) -> float:
    """exp of the mean per-token negative log-likelihood, EOS included."""
    if not corpus:
        raise ValueError("perplexity: empty evaluation corpus")
    lp = np.asarray(lm.token_log_probs(corpus), dtype=np.float64)
    return float(np.exp(-lp.mean()))


def _pad(rows: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(r) for r in rows) + 1
    inp = np.full((len(rows), width), PAD_W, dtype=np.int64)
    tgt = np.full((len(rows), width), PAD_W, dtype=np.int64)
    for i, r in enumerate(rows):
        inp[i, : len(r) + 1] = [BOS_W, *r]
        tgt[i, : len(r) + 1] = [*r, EOS_W]
    return inp, tgt


@dataclass
class GruLM:
    """Word-level single-layer GRU language model with an untied output layer."""

    vocab: WordVocab
    emb: int = 128
    hidden: int = 256
    seed: int = 0
    store: ParamStore = field(init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        v, e, h = len(self.vocab), self.emb, self.hidden
        s = self.store = ParamStore("lm")
        s.add("embed", rng.standard_normal((v, e)) * 0.1)
        s.add("w_x", rng.standard_normal((e, 3 * h)) * np.sqrt(1.0 / e))
        s.add("w_h", rng.standard_normal((h, 3 * h)) * np.sqrt(1.0 / h))
        s.add("b", np.zeros(3 * h))
        s.add("out.w", rng.standard_normal((h, v)) * np.sqrt(1.0 / h))
        s.add("out.b", np.zeros(v))

    def logits(self, inputs: np.ndarray) -> Tensor:
        s, h = self.store, self.hidden
        b, t = inputs.shape
        xs = ag.matmul(ag.embedding(s["embed"], inputs), s["w_x"]) + s["b"]
        state = Tensor(np.zeros((b, h)))
        outs = []
        for i in range(t):
            x = xs[:, i, :]
            hh = ag.matmul(state, s["w_h"])
            z = ag.sigmoid(x[:, :h] + hh[:, :h])
            r = ag.sigmoid(x[:, h:2 * h] + hh[:, h:2 * h])
            cand = ag.tanh(x[:, 2 * h:] + r * hh[:, 2 * h:])
            state = (1.0 - z) * state + z * cand
            outs.append(state)
        hs = ag.stack(outs, axis=1)
        return ag.matmul(hs, s["out.w"]) + s["out.b"]

    def fit(self, corpus: Sequence[Sequence[str]], epochs: int = 10, batch_size: int = 32,
            lr: float = 2e-3, rng: np.random.Generator | None = None) -> "GruLM":
        rng = rng or np.random.default_rng(self.seed)
        rows = [self.vocab.encode(s) for s in corpus]
        for _ in range(epochs):
            order = rng.permutation(len(rows))
            for start in range(0, len(rows), batch_size):
                inp, tgt = _pad([rows[i] for i in order[start:start + batch_size]])
                loss = ag.cross_entropy(self.logits(inp), tgt, PAD_W)
                ag.backward(loss)
                clip_grad_norm(self.store, 5.0)
                adam_step(self.store, lr)
        return self

    def token_log_probs(self, corpus: Sequence[Sequence[str]]) -> np.ndarray:
        rows = [self.vocab.encode(s) for s in corpus]
        out = []
        with no_grad():
            for start in range(0, len(rows), 64):
                inp, tgt = _pad(rows[start:start + 64])
                lg = self.logits(inp).data
                lg = lg - lg.max(axis=-1, keepdims=True)
                logp = lg - np.log(np.exp(lg).sum(axis=-1, keepdims=True))
                picked = np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
                out.append(picked[tgt != PAD_W])
        return np.concatenate(out)


def train_lm(corpus: Sequence[Sequence[str]], epochs: int = 10, rng: np.random.Generator | int = 0,
             emb: int = 128, hidden: int = 256, max_vocab: int = 10000, **fit_kw) -> GruLM:
    if not corpus:
        raise ValueError("train_lm: empty training corpus")
    seed = rng if isinstance(rng, int) else int(rng.integers(2**31))
    lm = GruLM(WordVocab(corpus, max_vocab), emb, hidden, seed)
    return lm.fit(corpus, epochs, rng=np.random.default_rng(seed), **fit_kw)


def forward_ppl(real_train, generated, epochs: int = 10, seed: int = 0, **kw) -> float:
    """LM fit on real data, scored on generated text (fluency)."""
    return perplexity(train_lm(real_train, epochs, seed, **kw), generated)


def reverse_ppl(generated, real_test, epochs: int = 10, seed: int = 0, **kw) -> float:
    """LM fit on generated text, scored on real test data (diversity)."""
    return perplexity(train_lm(generated, epochs, seed, **kw), real_test)


# -- reports -------------------------------------------------------------------------------------
REPORT_COLUMNS = ("metric", "language", "value", "n_samples", "seed")


def tokenized_lines(lines: Iterable[str]) -> list[list[str]]:
    return [tokenize(line) for line in lines]


def write_report(rows: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": f"{float(r['value']):.6f}"})
    return path


def read_report(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
