import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bgan import autograd as ag
from bgan.gan import Discriminator, Generator, d_loss, g_loss, sample_z
from bgan.gradcheck import grad_check
from bgan.layers import spectral_normalize
from bgan.translation import LatentCode


def _sn(w, iters=50, seed=0):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(w.shape[0]), rng.standard_normal(w.shape[1])
    return spectral_normalize(ag.Tensor(np.asarray(w, dtype=np.float64)), u, v, iters)


# -- spectral norm -----------------------------------------------------------------------------
def test_spectral_norm_identity_unchanged():
    w, sigma = _sn(np.eye(4))
    assert sigma == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(w.data, np.eye(4), atol=1e-12)


def test_spectral_norm_diagonal():
    w, sigma = _sn(np.diag([3.0, 1.0]))
    assert sigma == pytest.approx(3.0, abs=1e-6)
    np.testing.assert_allclose(w.data, np.diag([1.0, 1 / 3]), atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_spectral_norm_random_matrix_svd_oracle(seed):
    m = np.random.default_rng(100 + seed).standard_normal((64, 64))
    w, _ = _sn(m, seed=seed)
    top = np.linalg.svd(w.data, compute_uv=False)[0]
    assert 0.99 <= top <= 1.01


def test_spectral_norm_zero_matrix_guarded():
    w, sigma = _sn(np.zeros((3, 2)))
    assert sigma == 0.0
    assert np.all(w.data == 0) and np.all(np.isfinite(w.data))


def test_spectral_norm_state_persists():
    rng = np.random.default_rng(0)
    m = ag.Tensor(rng.standard_normal((6, 5)))
    u, v = rng.standard_normal(6), rng.standard_normal(5)
    before = u.copy()
    spectral_normalize(m, u, v, 1)
    assert not np.allclose(before, u)
    frozen = u.copy()
    spectral_normalize(m, u, v, 1, update=False)
    np.testing.assert_array_equal(u, frozen)


def test_spectral_norm_rejects_zero_iterations():
    with pytest.raises(ValueError):
        _sn(np.eye(2), iters=0)


def test_spectral_norm_gradient():
    rng = np.random.default_rng(2)
    u, v = rng.standard_normal(4), rng.standard_normal(3)
    c = rng.standard_normal((4, 3))
    w = ag.Tensor(rng.standard_normal((4, 3)), requires_grad=True)

    # the analytic gradient treats (u, v) as constants, which is exact at the fixed point
    spectral_normalize(w, u, v, 500)

    def f(x):
        out, _ = spectral_normalize(x, u, v, 1, update=False)
        return (out * c).sum()

    assert grad_check(f, w) < 1e-4


def test_trained_discriminator_weights_bounded():
    dis = Discriminator(16, heads=2, seed=0, dtype=np.float64)
    dis.set_power_iteration(50)
    for lin in dis.linears():
        lin.w.data += np.random.default_rng(1).standard_normal(lin.w.shape)  # perturb as if trained
        assert np.linalg.svd(lin.weight().data, compute_uv=False)[0] <= 1 + 1e-2


def test_every_discriminator_linear_has_state():
    dis = Discriminator(8, heads=2, seed=0)
    for lin in dis.linears():
        assert lin.spectral
        assert f"{lin.path}.sn_u" in dis.store.buffers and f"{lin.path}.sn_v" in dis.store.buffers
    assert not any(k.startswith("gen") for k in dis.store.buffers)


# -- noise and generator -----------------------------------------------------------------------
def test_sample_z_mean_and_shape():
    z = sample_z(10, 10, 1000, np.random.default_rng(0), np.float64)
    assert z.shape == (10, 10, 1000)
    assert abs(z.mean()) < 3 / np.sqrt(z.size)


def test_sample_z_seeded():
    a = sample_z(2, 3, 4, np.random.default_rng(9))
    np.testing.assert_array_equal(a, sample_z(2, 3, 4, np.random.default_rng(9)))


def test_sample_z_rejects_empty_batch():
    with pytest.raises(ValueError):
        sample_z(0, 3, 4, np.random.default_rng(0))


def test_generator_codes_unit_full_mask_and_distinct():
    gen = Generator(16, 8, length=7, heads=2, seed=0)
    code = gen(gen.sample_z(5, np.random.default_rng(0)))
    assert code.data.shape == (5, 7, 16)
    assert code.mask.all()
    np.testing.assert_allclose(np.linalg.norm(code.data.data, axis=-1), 1.0, atol=1e-6)
    flat = code.data.data.reshape(5, -1)
    dists = np.linalg.norm(flat[:, None] - flat[None], axis=-1)
    assert np.all(dists[~np.eye(5, dtype=bool)] > 0)


def test_generator_has_no_spectral_state():
    assert Generator(8, 4, 3, heads=2).store.buffers == {}


# -- discriminator --------------------------------------------------------------------------------
def _random_code(rng, b=3, n=6, d=16, mask=None):
    x = rng.standard_normal((b, n, d))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    return LatentCode(ag.Tensor(x), np.ones((b, n), bool) if mask is None else mask)


def test_discriminator_scalar_per_code_and_position_sensitive():
    dis = Discriminator(16, heads=2, seed=0, dtype=np.float64)
    dis.set_power_iteration(5, update=False)
    rng = np.random.default_rng(0)
    code = _random_code(rng)
    s = dis(code)
    assert s.shape == (3,)
    shuffled = LatentCode(ag.Tensor(code.data.data[:, ::-1].copy()), code.mask)
    assert not np.allclose(s.data, dis(shuffled).data)


def test_discriminator_ignores_masked_positions():
    dis = Discriminator(16, heads=2, seed=0, dtype=np.float64)
    dis.set_power_iteration(1, update=False)
    rng = np.random.default_rng(0)
    mask = np.ones((3, 6), bool)
    mask[:, 4:] = False
    a = _random_code(rng, mask=mask)
    b = LatentCode(ag.Tensor(a.data.data.copy()), mask)
    b.data.data[:, 4:] = 7.0
    np.testing.assert_allclose(dis(a).data, dis(b).data, atol=1e-12)


def test_discriminator_lipschitz_smoke():
    dis = Discriminator(16, heads=2, seed=3, dtype=np.float64)
    dis.set_power_iteration(20)
    dis(_random_code(np.random.default_rng(0)))
    dis.set_power_iteration(1, update=False)
    rng = np.random.default_rng(1)
    ratios = []
    for _ in range(50):
        c = _random_code(rng, b=1)
        delta = rng.standard_normal(c.data.shape) * 1e-3
        moved = LatentCode(ag.Tensor(c.data.data + delta), c.mask)
        ratios.append(abs(dis(c).item() - dis(moved).item()) / np.linalg.norm(delta))
    # residual sub-layers: each SN linear is 1-Lipschitz, attention adds a bounded factor
    assert max(ratios) < 50.0


# -- hinge losses ------------------------------------------------------------------------------------
@pytest.mark.parametrize("real,fake,want", [
    ([1.0], [-1.0], 0.0),
    ([0.5], [-0.3], 1.2),
    ([2.0], [-3.0], 0.0),
])
def test_d_loss_examples(real, fake, want):
    assert d_loss(ag.Tensor(np.array(real)), ag.Tensor(np.array(fake))).item() == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("fake,want", [([0.2], -0.2), ([0.2, -0.4], 0.1), ([0.0, 0.0], 0.0)])
def test_g_loss_examples(fake, want):
    assert g_loss(ag.Tensor(np.array(fake))).item() == pytest.approx(want, abs=1e-15)


def test_losses_reject_empty():
    with pytest.raises(ValueError):
        d_loss(ag.Tensor(np.zeros(0)), ag.Tensor(np.zeros(1)))
    with pytest.raises(ValueError):
        g_loss(ag.Tensor(np.zeros(0)))


scores = st.lists(st.floats(-5, 5), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None)
@given(scores, scores)
def test_d_loss_nonnegative_and_zero_iff_margins(real, fake):
    val = d_loss(ag.Tensor(np.array(real)), ag.Tensor(np.array(fake))).item()
    assert val >= 0
    assert (val == 0) == (min(real) >= 1 and max(fake) <= -1)


# -- gradient paths through G and D -------------------------------------------------------------------
def _tiny_gan():
    gen = Generator(8, 4, length=4, heads=2, seed=0, dtype=np.float64)
    dis = Discriminator(8, heads=2, seed=1, dtype=np.float64)
    # converge (u, v), then freeze them so f is a pure function of the weights
    dis.set_power_iteration(500)
    for lin in dis.linears():
        lin.weight()
    dis.set_power_iteration(1, update=False)
    return gen, dis


def test_d_loss_gradient_path():
    gen, dis = _tiny_gan()
    rng = np.random.default_rng(0)
    real = _random_code(rng, b=2, n=4, d=8)
    fake = gen(gen.sample_z(2, rng)).detach()

    def f(_):
        return d_loss(dis(real), dis(fake))

    for path, p in dis.store.trainable():
        assert grad_check(f, p, max_coords=5, rng=rng) < 1e-4, path


def test_g_loss_gradient_path():
    gen, dis = _tiny_gan()
    rng = np.random.default_rng(0)
    z = gen.sample_z(2, rng)

    def f(_):
        return g_loss(dis(gen(z)))

    for path, p in gen.store.trainable():
        assert grad_check(f, p, max_coords=5, rng=rng) < 1e-4, path
