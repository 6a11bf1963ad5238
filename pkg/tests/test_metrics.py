import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bgan.metrics import (GruLM, References, UniformLM, WordVocab, bleu_n, forward_ppl,
                          generation_bleu, perplexity, read_report, reverse_ppl, train_lm,
                          write_report)


# -- BLEU -----------------------------------------------------------------------------------
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_bleu_perfect_match(n):
    s = "a man rides a red horse".split()
    assert bleu_n(s, [s], n) == pytest.approx(100.0, abs=1e-9)


def test_bleu_clipped_unigrams():
    assert round(bleu_n("the the the".split(), ["the cat".split()], 1), 4) == 33.3333


def test_bleu_bigram_hand_example():
    score = bleu_n("the cat sat down".split(), ["the cat sat".split()], 2)
    assert round(score, 4) == round(100 * math.sqrt(0.5), 4) == 70.7107


def test_bleu_brevity_penalty():
    score = bleu_n(["the", "cat"], [["the", "cat", "sat", "on"]], 1)
    assert score == pytest.approx(100 * math.exp(1 - 4 / 2))


def test_bleu_zero_precision_gives_zero():
    assert bleu_n(["a", "b"], [["a", "c"]], 2) == 0.0


def test_bleu_empty_hypothesis_scores_zero_and_bad_order_raises():
    assert bleu_n([], [["a"]], 1) == 0.0
    with pytest.raises(ValueError):
        bleu_n(["a"], [["a"]], 0)


def test_closest_reference_length_prefers_shorter_on_tie():
    assert References([["a"] * 2, ["a"] * 4]).closest_length(3) == 2


sents = st.lists(st.sampled_from("abcde"), min_size=1, max_size=7)


@settings(max_examples=80, deadline=None)
@given(sents, st.lists(sents, min_size=1, max_size=4), sents, st.integers(1, 3))
def test_bleu_reference_permutation_and_monotonicity(hyp, refs, extra, n):
    base = bleu_n(hyp, refs, n)
    assert bleu_n(hyp, refs[::-1], n) == pytest.approx(base, abs=1e-9)
    assert 0.0 <= base <= 100.0 + 1e-9
    if len(extra) == len(hyp):  # same length keeps the brevity term fixed
        assert bleu_n(hyp, refs + [extra], n) >= base - 1e-9


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_generation_bleu_identical_corpus(n):
    corpus = [s.split() for s in ("the dog sees a cat", "a big man holds the red car",
                                  "the girl likes the old horse")]
    assert generation_bleu(corpus, corpus, n) == pytest.approx(100.0, abs=1e-9)


def test_generation_bleu_random_strings_near_zero():
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(500)]
    gen = [list(rng.choice(words, 8)) for _ in range(50)]
    refs = [list(rng.choice(words, 8)) for _ in range(50)]
    assert generation_bleu(gen, refs, 5) < 1.0


# -- perplexity -------------------------------------------------------------------------------------
class FixedLM:
    def __init__(self, probs):
        self.probs = probs

    def token_log_probs(self, corpus):
        return np.log(self.probs)


def test_uniform_perplexity_is_vocab_size():
    corpus = [["a", "b"], ["c"]]
    assert perplexity(UniformLM(10), corpus) == pytest.approx(10.0, abs=1e-6)


def test_hand_perplexity_two_root_two():
    assert perplexity(FixedLM([0.5, 0.25]), [["x"]]) == pytest.approx(2 * math.sqrt(2), abs=1e-4)


def test_perplexity_empty_corpus_raises():
    with pytest.raises(ValueError):
        perplexity(UniformLM(3), [])


def test_word_vocab_cap_and_unk():
    v = WordVocab([["a", "a", "b", "c"]], max_size=1)
    assert v.encode(["a", "c"])[0] != v.encode(["a", "c"])[1]
    assert v.encode(["b"]) == v.encode(["zzz"])


def test_lm_scores_every_word_plus_eos():
    lm = GruLM(WordVocab([["a", "b"]]), emb=4, hidden=5)
    assert lm.token_log_probs([["a", "b"], ["b"]]).shape == (5,)


def test_untrained_lm_is_near_uniform():
    corpus = [["a", "b", "c"]]
    lm = GruLM(WordVocab(corpus), emb=8, hidden=8)
    assert perplexity(lm, corpus) == pytest.approx(len(lm.vocab), rel=0.3)


CORPUS = [s.split() for s in (
    "the man sees a dog", "a girl holds the cat", "the old horse likes the boy",
    "a small child follows a woman", "the red car is near the river", "a boy watches the tree",
    "the happy woman pulls a cart", "a dog sleeps under the house", "the cat sees the girl",
    "a big man holds a small dog")]


def test_lm_overfits_small_corpus():
    lm = train_lm(CORPUS, epochs=60, rng=0, emb=32, hidden=64, lr=1e-2)
    assert perplexity(lm, CORPUS) < 1.5


def test_reverse_perplexity_flags_repeated_sentence():
    repeated = [CORPUS[0]] * 10
    r_bad = reverse_ppl(repeated, CORPUS, epochs=60, seed=0, emb=32, hidden=64, lr=1e-2)
    r_good = reverse_ppl(CORPUS, CORPUS, epochs=60, seed=0, emb=32, hidden=64, lr=1e-2)
    assert r_bad > 10 * r_good


def test_forward_perplexity_on_training_sample_matches_held_in():
    lm = train_lm(CORPUS, epochs=5, rng=0, emb=16, hidden=32)
    f = forward_ppl(CORPUS, CORPUS, epochs=5, seed=0, emb=16, hidden=32)
    assert f == pytest.approx(perplexity(lm, CORPUS), rel=1e-12)


# -- report ------------------------------------------------------------------------------------------
def test_report_round_trip(tmp_path):
    rows = [{"metric": "bleu2", "language": "1", "value": 12.5, "n_samples": 200, "seed": 0}]
    path = write_report(rows, tmp_path / "r.csv")
    assert path.read_text().splitlines()[0] == "metric,language,value,n_samples,seed"
    assert read_report(path)[0]["value"] == "12.500000"
