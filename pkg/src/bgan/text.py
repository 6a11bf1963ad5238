"""Tokenization, byte-pair encoding, the joint vocabulary, denoising noise and batching."""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
EOW = "</w>"
BPE_HEADER = "#version bgan-1"

_PUNCT = ".,!?;:\"'()«»"
_LEAD = re.compile(f"^([{re.escape(_PUNCT)}])")
_TRAIL = re.compile(f"([{re.escape(_PUNCT)}])$")


def tokenize(text: str) -> list[str]:
    """Whitespace split, then peel leading/trailing punctuation into separate tokens."""
    out: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and (m := _LEAD.match(chunk)):
            lead.append(m.group(1))
            chunk = chunk[1:]
        while chunk and (m := _TRAIL.search(chunk)):
            trail.append(m.group(1))
            chunk = chunk[:-1]
        out.extend(lead)
        if chunk:
            out.append(chunk)
        out.extend(reversed(trail))
    return out


# -- BPE ----------------------------------------------------------------------------
@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...] = ()

    @property
    def ranks(self) -> dict[tuple[str, str], int]:
        return {pair: i for i, pair in enumerate(self.merges)}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        lines = [BPE_HEADER] + [f"{a} {b}" for a, b in self.merges]
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "BpeModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != BPE_HEADER:
            raise ValueError(f"{path}: not a BPE model file (missing {BPE_HEADER!r} header)")
        merges = []
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValueError(f"{path}:{n}: expected 'symbol1 symbol2'")
            merges.append((parts[0], parts[1]))
        return cls(tuple(merges))


def _merge_word(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    a, b = pair
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(corpora: Iterable[Iterable[Sequence[str]]], num_merges: int) -> BpeModel:
    """Greedy most-frequent-pair merging; ties go to the lexicographically smallest pair."""
    freqs: Counter[str] = Counter()
    for corpus in corpora:
        for sentence in corpus:
            freqs.update(sentence)
    if not freqs:
        raise ValueError("learn_bpe: combined corpus is empty")
    words = {tuple(w) + (EOW,): c for w, c in freqs.items()}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs: Counter[tuple[str, str]] = Counter()
        for syms, c in words.items():
            for pair in zip(syms, syms[1:]):
                pairs[pair] += c
        if not pairs:
            break
        top = max(pairs.values())
        best = min(p for p, c in pairs.items() if c == top)
        merges.append(best)
        words = {_merge_word(s, best): c for s, c in words.items()}
    return BpeModel(tuple(merges))


def bpe_encode(word: str, model: BpeModel, _ranks: dict | None = None) -> list[str]:
    ranks = _ranks if _ranks is not None else model.ranks
    symbols = tuple(word) + (EOW,)
    while len(symbols) > 1:
        candidates = [(ranks[p], p) for p in zip(symbols, symbols[1:]) if p in ranks]
        if not candidates:
            break
        symbols = _merge_word(symbols, min(candidates)[1])
    return list(symbols)


def bpe_decode(subwords: Sequence[str]) -> list[str]:
    """Concatenate subwords and split words on the end-of-word marker."""
    joined = "".join(subwords)
    words = joined.split(EOW)
    if words and words[-1] == "":
        words.pop()
    return [w for w in words if w]


class BpeEncoder:
    """Caching word->subword encoder for a fixed model."""

    def __init__(self, model: BpeModel):
        self.model = model
        self._ranks = model.ranks
        self._cache: dict[str, list[str]] = {}

    def __call__(self, words: Sequence[str]) -> list[str]:
        out: list[str] = []
        for w in words:
            if w not in self._cache:
                self._cache[w] = bpe_encode(w, self.model, self._ranks)
            out.extend(self._cache[w])
        return out


# -- vocabulary -----------------------------------------------------------------------
class Vocab:
    """Joint subword table shared by both languages; reserved ids 0-3."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids if i not in (PAD, BOS, EOS)]

    @classmethod
    def build(cls, encoded_corpora: Iterable[Iterable[Sequence[str]]]) -> "Vocab":
        counts: Counter[str] = Counter()
        for corpus in encoded_corpora:
            for sent in corpus:
                counts.update(sent)
        return cls(sorted(counts, key=lambda t: (-counts[t], t)))

    def dumps(self) -> str:
        return "".join(f"{t}\t{i}\n" for i, t in enumerate(self.itos))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        rows = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line:
                continue
            tok, sep, idx = line.rpartition("\t")
            if not sep:
                raise ValueError(f"{path}:{n}: expected 'token<TAB>id'")
            rows.append((int(idx), tok))
        rows.sort()
        if [i for i, _ in rows] != list(range(len(rows))) or tuple(t for _, t in rows[:4]) != RESERVED:
            raise ValueError(f"{path}: ids must be contiguous with reserved tokens first")
        return cls([t for _, t in rows])

    def hash(self) -> bytes:
        return hashlib.sha256(self.dumps().encode("utf-8")).digest()


def load_embeddings(path: str | Path, vocab: Vocab, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Read a "token v1 ... vd" file; returns (matrix V x dim, found mask)."""
    table = np.zeros((len(vocab), dim))
    found = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            if len(parts) - 1 != dim:
                raise ValueError(f"{path}:{n}: expected {dim} values, got {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is not None:
                table[idx] = [float(v) for v in parts[1:]]
                found[idx] = True
    return table, found


# -- sentences, noise, filtering ----------------------------------------------------------
@dataclass
class Sentence:
    ids: list[int]
    lang: int

    def __post_init__(self):
        if not self.ids or self.ids[0] != BOS or self.ids[-1] != EOS:
            raise ValueError("sentence must be framed by BOS ... EOS")
        if self.lang not in (1, 2):
            raise ValueError(f"language must be 1 or 2, got {self.lang}")

    @property
    def interior(self) -> list[int]:
        return self.ids[1:-1]

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def frame(cls, interior: Sequence[int], lang: int) -> "Sentence":
        return cls([BOS, *interior, EOS], lang)


@dataclass(frozen=True)
class NoiseConfig:
    p_drop: float = 0.1
    k_shuffle: int = 3

    def __post_init__(self):
        if not 0.0 <= self.p_drop <= 1.0:
            raise ValueError("p_drop must lie in [0, 1]")
        if self.k_shuffle < 0:
            raise ValueError("k_shuffle must be nonnegative")


def apply_noise(s: Sentence, cfg: NoiseConfig, rng: np.random.Generator) -> Sentence:
    """Word dropout followed by a local shuffle with displacement at most ``k_shuffle``."""
    interior = list(s.interior)
    if cfg.p_drop > 0 and interior:
        keep = rng.random(len(interior)) >= cfg.p_drop
        if keep.any():
            interior = [t for t, k in zip(interior, keep) if k]
    if cfg.k_shuffle > 0 and len(interior) > 1:
        keys = np.arange(len(interior)) + rng.uniform(0, cfg.k_shuffle + 1, size=len(interior))
        interior = [interior[i] for i in np.argsort(keys, kind="stable")]
    return Sentence.frame(interior, s.lang)


def length_filter(corpus: Sequence[Sentence], t_max: int) -> tuple[list[Sentence], float]:
    """Drop sentences with more than ``t_max`` interior tokens; returns (kept, dropped fraction)."""
    kept = [s for s in corpus if len(s.interior) <= t_max]
    dropped = (len(corpus) - len(kept)) / len(corpus) if corpus else 0.0
    return kept, dropped


def read_lines(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


# -- batching -------------------------------------------------------------------------------
@dataclass
class Batch:
    ids: np.ndarray       # (B, L) int64, right-padded with PAD
    lengths: np.ndarray   # (B,) framed lengths
    lang: int

    @property
    def mask(self) -> np.ndarray:
        return self.ids != PAD

    def sentences(self) -> list[Sentence]:
        return [Sentence(list(map(int, row[:n])), self.lang) for row, n in zip(self.ids, self.lengths)]


def pad_batch(sentences: Sequence[Sentence], lang: int | None = None, width: int | None = None) -> Batch:
    if not sentences:
        raise ValueError("cannot batch zero sentences")
    lengths = np.array([len(s) for s in sentences], dtype=np.int64)
    width = max(int(lengths.max()), width or 0)
    ids = np.full((len(sentences), width), PAD, dtype=np.int64)
    for row, s in zip(ids, sentences):
        row[: len(s)] = s.ids
    return Batch(ids, lengths, lang if lang is not None else sentences[0].lang)


@dataclass
class BatchStream:
    """Endless shuffled batches over one language; reshuffles at every epoch boundary."""

    corpus: list[Sentence]
    batch_size: int
    rng: np.random.Generator
    order: list[int] = field(default_factory=list)
    cursor: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if not self.corpus:
            raise ValueError("cannot batch an empty corpus")

    def __iter__(self):
        return self

    def __next__(self) -> Batch:
        if self.cursor >= len(self.order):
            self.order = [int(i) for i in self.rng.permutation(len(self.corpus))]
            self.cursor = 0
            self.epoch += 1
        picked = self.order[self.cursor: self.cursor + self.batch_size]
        self.cursor += len(picked)
        return pad_batch([self.corpus[i] for i in picked])

    def state(self) -> dict:
        return {"order": self.order, "cursor": self.cursor, "epoch": self.epoch,
                "rng": self.rng.bit_generator.state}

    def set_state(self, state: dict) -> None:
        self.order = list(state["order"])
        self.cursor = int(state["cursor"])
        self.epoch = int(state["epoch"])
        self.rng.bit_generator.state = state["rng"]


def make_batches(corpus: list[Sentence], batch_size: int, rng: np.random.Generator) -> BatchStream:
    return BatchStream(corpus, batch_size, rng)


@dataclass
class TextPipeline:
    """BPE model + joint vocab bound together: raw line <-> framed id sentence."""

    bpe: BpeModel
    vocab: Vocab

    def __post_init__(self):
        self._enc = BpeEncoder(self.bpe)

    def encode_line(self, line: str, lang: int) -> Sentence:
        return Sentence.frame(self.vocab.encode(self._enc(tokenize(line))), lang)

    def decode_ids(self, ids: Iterable[int]) -> str:
        return " ".join(bpe_decode(self.vocab.decode(ids)))

    def words(self, ids: Iterable[int]) -> list[str]:
        return bpe_decode(self.vocab.decode(ids))

    @classmethod
    def fit(cls, corpora: Sequence[Sequence[str]], num_merges: int) -> "TextPipeline":
        tokenized = [[tokenize(line) for line in corpus] for corpus in corpora]
        bpe = learn_bpe(tokenized, num_merges)
        enc = BpeEncoder(bpe)
        vocab = Vocab.build([[enc(s) for s in corpus] for corpus in tokenized])
        return cls(bpe, vocab)
