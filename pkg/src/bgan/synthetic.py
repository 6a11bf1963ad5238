"""Small grammar-generated corpora and a word-substitution cipher language.

Used for smoke runs and for the acceptance checks: the cipher language is an
exact word-for-word image of the base language, so translation accuracy has a
ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DETS = ["the", "a"]
NOUNS = ["man", "woman", "dog", "child", "boy", "girl", "cat", "horse"]
ADJS = ["young", "old", "small", "big", "happy", "red"]
VERBS = ["sees", "follows", "watches", "pulls", "holds", "likes"]
PREPS = ["near", "behind", "under"]
PLACES = ["tree", "house", "car", "river"]


def grammar_sentence(rng: np.random.Generator, max_words: int = 10) -> list[str]:
    def np_phrase(nouns):
        words = [DETS[rng.integers(len(DETS))]]
        if rng.random() < 0.5:
            words.append(ADJS[rng.integers(len(ADJS))])
        words.append(nouns[rng.integers(len(nouns))])
        return words

    while True:
        words = np_phrase(NOUNS) + [VERBS[rng.integers(len(VERBS))]] + np_phrase(NOUNS)
        if rng.random() < 0.4:
            words += [PREPS[rng.integers(len(PREPS))]] + np_phrase(PLACES)
        if len(words) <= max_words:
            return words


def toy_corpus(n: int, seed: int = 0, max_words: int = 10, unique: bool = True) -> list[str]:
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        line = " ".join(grammar_sentence(rng, max_words))
        if unique and line in seen:
            continue
        seen.add(line)
        out.append(line)
    return out


def base_words() -> list[str]:
    return DETS + NOUNS + ADJS + VERBS + PREPS + PLACES


@dataclass(frozen=True)
class Cipher:
    mapping: dict

    @classmethod
    def make(cls, words: Sequence[str], seed: int = 0) -> "Cipher":
        rng = np.random.default_rng(seed)
        consonants, vowels = "bdfgklmnprstvz", "aeiou"
        taken = set(words)
        mapping = {}
        for w in words:
            while True:
                n_syl = 1 + int(rng.integers(2))
                c = "".join(consonants[rng.integers(len(consonants))] + vowels[rng.integers(len(vowels))]
                            for _ in range(n_syl)) + "q"
                if c not in taken:
                    taken.add(c)
                    mapping[w] = c
                    break
        return cls(mapping)

    @property
    def inverse(self) -> dict:
        return {v: k for k, v in self.mapping.items()}

    def encipher(self, line: str) -> str:
        return " ".join(self.mapping.get(w, w) for w in line.split())


def cipher_task(n_train: int = 500, n_test: int = 100, seed: int = 0, max_words: int = 10):
    """Disjoint monolingual halves plus a held-out parallel test set.

    Returns ``(lang1_train, lang2_train, test_src, test_ref, cipher)``.
    """
    lines = toy_corpus(2 * n_train + n_test, seed, max_words)
    cipher = Cipher.make(base_words(), seed)
    l1 = lines[:n_train]
    l2 = [cipher.encipher(s) for s in lines[n_train:2 * n_train]]
    test = lines[2 * n_train:]
    return l1, l2, test, [cipher.encipher(s) for s in test], cipher


def write_lines(path: str | Path, lines: Sequence[str]) -> Path:
    path = Path(path)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def aligned_embeddings(cipher: Cipher, d: int, seed: int = 0, eow: str = "</w>") -> list[str]:
    """Cross-lingual embedding lines in which a word and its cipher image share a vector."""
    rng = np.random.default_rng(seed)
    lines = []
    for w, c in cipher.mapping.items():
        vec = rng.standard_normal(d) * (0.5 * d ** -0.5)
        txt = " ".join(f"{x:.6f}" for x in vec)
        lines += [f"{w}{eow} {txt}", f"{c}{eow} {txt}"]
    return lines
