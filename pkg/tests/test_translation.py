import numpy as np
import pytest

from bgan import autograd as ag
from bgan.gradcheck import grad_check
from bgan.optim import adam_step
from bgan.text import BOS, EOS, PAD, NoiseConfig, Sentence, apply_noise, pad_batch
from bgan.translation import (LatentCode, Translation, TranslationUnit, add_code_noise,
                              spherical_normalize)

from conftest import V


def test_encode_shape_mask_and_unit_rows(small_tu, batch):
    code = small_tu.encode(batch)
    assert code.data.shape == batch.ids.shape + (16,)
    np.testing.assert_array_equal(code.mask, batch.ids != PAD)
    norms = np.linalg.norm(code.data.data, axis=-1)
    np.testing.assert_allclose(norms[code.mask], 1.0, atol=1e-6)
    assert np.all(code.data.data[~code.mask] == 0)


def test_encode_deterministic(small_tu, batch):
    np.testing.assert_array_equal(small_tu.encode(batch).data.data, small_tu.encode(batch).data.data)


def test_encode_is_position_sensitive(small_tu):
    a = small_tu.encode(Sentence.frame([5, 6, 7], 1)).data.data
    b = small_tu.encode(Sentence.frame([6, 5, 7], 1)).data.data
    assert not np.allclose(a, b)


def test_encode_is_language_agnostic(small_tu):
    a = small_tu.encode(Sentence.frame([5, 6], 1)).data.data
    b = small_tu.encode(Sentence.frame([5, 6], 2)).data.data
    np.testing.assert_array_equal(a, b)


def test_encode_rejects_over_length(small_tu):
    with pytest.raises(ValueError):
        small_tu.encode(Sentence.frame([4] * 9, 1))


# -- code post-processing ----------------------------------------------------------------------
def _code(rows, mask=None):
    data = np.asarray(rows, dtype=np.float64)[None]
    mask = np.ones(data.shape[:2], bool) if mask is None else np.asarray(mask)[None]
    return LatentCode(ag.Tensor(data), mask)


def test_spherical_normalize_cases():
    out = spherical_normalize(_code([[3.0, 4.0], [0.6, 0.8], [0.0, 0.0]])).data.data[0]
    np.testing.assert_allclose(out[0], [0.6, 0.8], atol=1e-15)
    np.testing.assert_allclose(out[1], [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(out[2], [0.0, 0.0])


def test_spherical_normalize_zeroes_masked_rows():
    out = spherical_normalize(_code([[1.0, 1.0], [2.0, 0.0]], [True, False])).data.data[0]
    np.testing.assert_array_equal(out[1], [0.0, 0.0])


def test_code_noise_sigma_zero_is_identity():
    c = _code([[1.0, 0.0]])
    assert add_code_noise(c, 0.0, np.random.default_rng(0)) is c


def test_code_noise_statistics_and_mask():
    sigma, n = 0.05, 100_000
    data = np.zeros((1, n // 2 + 1, 2))
    mask = np.ones((1, n // 2 + 1), bool)
    mask[0, -1] = False
    noisy = add_code_noise(LatentCode(ag.Tensor(data), mask), sigma, np.random.default_rng(0)).data.data
    draws = noisy[0, :-1].reshape(-1)
    assert abs(draws.mean()) < 3 * sigma / np.sqrt(draws.size)
    assert draws.std() == pytest.approx(sigma, rel=0.02)
    assert np.all(noisy[0, -1] == 0)


# -- decoding --------------------------------------------------------------------------------------
def test_decode_teacher_forced_shape_and_language_conditioning(small_tu, batch):
    code = small_tu.encode(batch)
    l1 = small_tu.decode_teacher_forced(code, batch, 1).data
    l2 = small_tu.decode_teacher_forced(code, batch, 2).data
    assert l1.shape == (3, batch.ids.shape[1] - 1, V)
    assert not np.allclose(l1, l2)


def test_cross_attention_ignores_pad_rows(small_tu, batch):
    code = small_tu.encode(batch)
    small_tu.decode_teacher_forced(code, batch, 1)
    w = small_tu.decoder[0].cross_attn.last_weights
    assert np.all(w[~np.broadcast_to(code.mask[:, None, None, :], w.shape)] == 0)


def test_untrained_reconstruction_near_log_v():
    tu = TranslationUnit(64, d=64, n_layers=2, heads=4, max_len=10, seed=3)
    rng = np.random.default_rng(0)
    sents = [Sentence.frame(list(rng.integers(4, 64, size=6)), 1) for _ in range(16)]
    loss = tu.reconstruction_loss(pad_batch(sents), NoiseConfig(), rng).item()
    assert abs(loss - np.log(64)) < 0.2 * np.log(64)


def test_overfit_single_sentence():
    tu = TranslationUnit(V, d=16, n_layers=1, heads=2, max_len=8, seed=0)
    s = Sentence.frame([5, 9, 4, 7], 1)
    rng = np.random.default_rng(0)
    for _ in range(300):
        loss = tu.reconstruction_loss(s, NoiseConfig(0.0, 0), rng)
        ag.backward(loss)
        adam_step(tu.store, 1e-2)
    assert tu.reconstruction_loss(s, NoiseConfig(0.0, 0), rng).item() < 0.01


def test_zero_noise_reconstruction_is_plain_autoencoding(small_tu, batch):
    got = small_tu.reconstruction_loss(batch, NoiseConfig(0.0, 0), np.random.default_rng(0)).item()
    want = small_tu.sequence_loss(small_tu.encode(batch), batch, 1).item()
    assert got == want


# -- translation -------------------------------------------------------------------------------------
def test_translate_emits_eos_immediately_when_rigged(small_tu, batch):
    # constant final hidden state, and only the EOS row aligned with it
    small_tu.store["dec.norm.gain"].data[:] = 0.0
    small_tu.store["dec.norm.bias"].data[:] = 1.0
    small_tu.tokens.data[EOS] = 1.0
    out = small_tu.translate(batch, 2)
    assert all(s.ids == [BOS, EOS] for s in out.batch.sentences())
    assert not out.truncated.any()


@pytest.mark.parametrize("max_len", [0, 1, 3, 8])
def test_translate_respects_max_len_and_never_emits_pad_or_bos(small_tu, batch, max_len):
    out = small_tu.translate(batch, 2, max_len=max_len)
    for s in out.batch.sentences():
        assert len(s.interior) <= max_len
        assert s.lang == 2
        assert PAD not in s.interior and BOS not in s.interior


def test_translate_refuses_same_language(small_tu, batch):
    with pytest.raises(ValueError):
        small_tu.translate(batch, 1)


def test_cross_domain_with_identity_translator_equals_clean_reconstruction(small_tu, batch, monkeypatch):
    def identity(b, to_lang, max_len=None):
        return Translation(pad_batch([Sentence(s.ids, to_lang) for s in b.sentences()]),
                           np.zeros(len(b.ids), bool))

    monkeypatch.setattr(small_tu, "translate", identity)
    cd = small_tu.cross_domain_loss(batch).item()
    rec = small_tu.reconstruction_loss(batch, NoiseConfig(0.0, 0), np.random.default_rng(0)).item()
    assert cd == pytest.approx(rec, abs=1e-12)


def test_cross_domain_finite_when_untrained(small_tu, batch):
    assert np.isfinite(small_tu.cross_domain_loss(batch).item())


def test_cross_domain_gradient_skips_translator(small_tu, batch):
    loss = small_tu.cross_domain_loss(batch)
    ag.backward(loss)
    assert all(np.all(np.isfinite(t.grad)) for _, t in small_tu.store.trainable() if t.grad is not None)


# -- sharing and size -----------------------------------------------------------------------------
def test_update_from_language_one_moves_language_two_codes(small_tu):
    s2 = Sentence.frame([6, 7, 8], 2)
    before = small_tu.encode(s2).data.data.copy()
    ag.backward(small_tu.reconstruction_loss(Sentence.frame([4, 5, 9], 1), NoiseConfig(0, 0),
                                             np.random.default_rng(0)))
    adam_step(small_tu.store, 1e-2)
    assert not np.allclose(before, small_tu.encode(s2).data.data)


def test_count_params_breakdown():
    d = 8
    tu = TranslationUnit(V, d=d, n_layers=1, heads=2, seed=0)
    counts = tu.count_params()
    assert counts["embed.lang"] == 2 * d
    assert counts["total"] == tu.store.count()
    assert counts["total"] == counts["monolingual"] + 2 * d
    assert counts["total"] <= 1.2 * counts["monolingual"]


def test_attention_parameters_scale_quadratically():
    def attn(d):
        tu = TranslationUnit(V, d=d, n_layers=1, heads=2, seed=0)
        return sum(t.data.size for p, t in tu.store if ".attn." in p and p.endswith(".w"))

    assert attn(16) == 4 * attn(8)


# -- gradient oracle on the reconstruction path ------------------------------------------------------
def test_reconstruction_gradient_matches_finite_differences(tiny_tu, batch):
    rng = np.random.default_rng(0)
    noised = pad_batch([apply_noise(s, NoiseConfig(), rng) for s in batch.sentences()])

    def f(_):
        return tiny_tu.sequence_loss(tiny_tu.encode(noised), batch, 1)

    for path, p in tiny_tu.store.trainable():
        assert grad_check(f, p, max_coords=6, rng=rng) < 1e-4, path
