import numpy as np
import pytest

from latpaint.generators import BlobGenerator, BlobGeneratorSpec, random_discriminator, sample_latent
from latpaint.losses import LossWeights, fidelity_loss, total_objective
from latpaint.optim import OptimConfig, optimize_single
from latpaint.pipeline import MODES, InpaintConfig, blend, inpaint_image, inpaint_sequence
from latpaint.pool import Pool, build_pool
from latpaint.tensor import ShapeError, mask_apply

SPEC = BlobGeneratorSpec(n_blobs=1, height=16, width=16, sigma_min=2.0, sigma_max=6.0, amp_max=1.5)


@pytest.fixture(scope="module")
def models():
    G = BlobGenerator(SPEC)
    return G, random_discriminator(G.shape, seed=1)


def hole(h=16, w=16, y=4, x=4, size=8):
    m = np.ones((h, w))
    m[y : y + size, x : x + size] = 0
    return m


class ConstG:
    latent_dim = 1
    shape = (2, 2, 1)

    def forward(self, z):
        return np.full(self.shape, 0.5)


def test_blend_examples():
    G = ConstG()
    img = np.array([[0.1, -0.2], [0.3, 0.9]])[:, :, None]
    assert np.array_equal(blend(img, np.ones((2, 2)), G, np.zeros(1)), img)
    out = blend(img, np.array([[1, 0], [0, 1]]), G, np.zeros(1))
    assert out[:, :, 0].tolist() == [[0.1, 0.5], [0.5, 0.9]]
    with pytest.raises(ValueError):
        blend(img, np.zeros((2, 2)), G, np.zeros(1))
    with pytest.raises(ShapeError):
        blend(img, np.ones((3, 2)), G, np.zeros(1))


def test_config_validation():
    with pytest.raises(ValueError):
        InpaintConfig(init="pool")
    with pytest.raises(ValueError):
        InpaintConfig(window=0)
    with pytest.raises(ValueError):
        InpaintConfig(init="zeros")
    assert InpaintConfig(optim=OptimConfig(max_iters=1000)).nonpivot_budget == 100
    assert InpaintConfig(optim=OptimConfig(max_iters=5)).nonpivot_budget == 1
    assert InpaintConfig(nonpivot_iters=7).refine_budget == 7


def test_inpaint_image_preserves_known_pixels(models):
    G, D = models
    rng = np.random.default_rng(0)
    cfg = InpaintConfig(optim=OptimConfig(max_iters=20))
    for i in range(50):
        img = rng.uniform(-1, 1, G.shape)
        m = (rng.uniform(size=(16, 16)) > 0.4).astype(float)
        m[0, 0] = 1
        res = inpaint_image(img, m, G, D, cfg, rng=i)
        known = m.astype(bool)
        assert np.array_equal(res.image[known], img[known])
        assert res.trajectory.iterations == 20


def test_inpaint_image_deterministic(models):
    G, D = models
    img = G.forward(sample_latent(3, G.latent_dim))
    cfg = InpaintConfig(optim=OptimConfig(max_iters=50, seed=4))
    a = inpaint_image(img, hole(), G, D, cfg)
    b = inpaint_image(img, hole(), G, D, cfg)
    assert np.array_equal(a.z, b.z) and a.trajectory.values == b.trajectory.values
    assert a.init == {"strategy": "random"}


def test_inpaint_image_ignores_hidden_pixels(models):
    G, D = models
    rng = np.random.default_rng(5)
    pool = build_pool(G, 30, seed=6)
    for init in ("random", "pool"):
        cfg = InpaintConfig(optim=OptimConfig(max_iters=40, seed=7), init=init, pool=pool)
        img = G.forward(sample_latent(rng, G.latent_dim))
        m = hole()
        other = img.copy()
        other[m == 0] = rng.uniform(-1, 1, other[m == 0].shape)
        a = inpaint_image(img, m, G, D, cfg)
        b = inpaint_image(other, m, G, D, cfg)
        assert a.trajectory.values == b.trajectory.values
        assert np.array_equal(a.z, b.z)


def test_planted_pool_recovers_hidden_region(models):
    G, D = models
    z_true = sample_latent(8, G.latent_dim).astype(np.float32).astype(np.float64)
    img = G.forward(z_true)
    pool = build_pool(G, 20, seed=9)
    planted = Pool(np.vstack([pool.latents, z_true]), np.concatenate([pool.images, img[None]]), pool.fingerprint)
    m = hole()
    res = inpaint_image(img, m, G, D, InpaintConfig(optim=OptimConfig(max_iters=200), init="pool", pool=planted))
    assert res.init["pool_index"] == 20
    assert np.max(np.abs(res.image - img)) <= 0.05


def test_lambda_zero_is_pure_fidelity(models):
    G, D = models
    img = G.forward(sample_latent(10, G.latent_dim))
    cfg = InpaintConfig(weights=LossWeights(lam=0.0), optim=OptimConfig(max_iters=30))
    res = inpaint_image(img, hole(), G, D, cfg)

    damaged = mask_apply(img, hole())
    z0 = sample_latent(np.random.default_rng(0), G.latent_dim)
    _, traj = optimize_single(z0, lambda z: fidelity_loss(z, damaged, hole(), G), OptimConfig(max_iters=30))
    assert res.trajectory.values == traj.values


# ---------------------------------------------------------------- sequences


def static_sequence(G, n=5, seed=11):
    img = G.forward(sample_latent(seed, G.latent_dim))
    return [(img, hole())] * n


@pytest.mark.parametrize("mode", MODES)
def test_single_frame_sequence_equals_inpaint_image(models, mode):
    G, D = models
    img = G.forward(sample_latent(12, G.latent_dim))
    cfg = InpaintConfig(optim=OptimConfig(max_iters=60, seed=13))
    (res,) = inpaint_sequence([(img, hole())], G, D, cfg, mode)
    ref = inpaint_image(img, hole(), G, D, cfg)
    assert np.array_equal(res.image, ref.image)
    assert res.trajectory.values == ref.trajectory.values


def test_reuse_warm_starts_from_previous_frame(models):
    G, D = models
    frames = static_sequence(G)
    cfg = InpaintConfig(optim=OptimConfig(max_iters=300, seed=14))
    res = inpaint_sequence(frames, G, D, cfg, "reuse")
    assert [r.init["role"] for r in res] == ["pivot", "warm", "warm", "warm", "warm"]
    for t in range(1, 5):
        assert res[t].trajectory.iterations == 30
        at_prev = total_objective(res[t - 1].z, mask_apply(*frames[t]), frames[t][1], G, D)[0]
        assert res[t].trajectory.values[0] == at_prev
        assert res[t].iterations_to_saturation <= res[0].iterations_to_saturation


def test_reuse_window_boundaries(models):
    G, D = models
    frames = static_sequence(G, n=7)
    cfg = InpaintConfig(optim=OptimConfig(max_iters=50), window=3)
    res = inpaint_sequence(frames, G, D, cfg, "reuse")
    assert [r.init["role"] for r in res] == ["pivot", "warm", "warm", "pivot", "warm", "warm", "pivot"]
    assert [r.trajectory.iterations for r in res] == [50, 5, 5, 50, 5, 5, 50]


def test_pivot_pool_reinit(models):
    G, D = models
    pool = build_pool(G, 30, seed=15)
    cfg = InpaintConfig(optim=OptimConfig(max_iters=20), window=2, init="pool", pool=pool, pivot_init="pool")
    res = inpaint_sequence(static_sequence(G, n=3), G, D, cfg, "reuse")
    assert res[2].init["strategy"] == "pool" and res[1].init["strategy"] == "warm"


def test_group_mu_zero_equals_reuse(models):
    G, D = models
    rng = np.random.default_rng(16)
    frames = [(G.forward(sample_latent(rng, G.latent_dim)), hole(x=t)) for t in range(6)]
    cfg = InpaintConfig(weights=LossWeights(mu=0.0), optim=OptimConfig(max_iters=60))
    a = inpaint_sequence(frames, G, D, cfg, "reuse")
    b = inpaint_sequence(frames, G, D, cfg, "reuse+group")
    for x, y in zip(a, b):
        assert np.array_equal(x.image, y.image) and np.array_equal(x.z, y.z)


def test_group_large_mu_consensus(models):
    G, D = models
    cfg = InpaintConfig(weights=LossWeights(mu=1e6), optim=OptimConfig(max_iters=100), refine_iters=300)
    res = inpaint_sequence(static_sequence(G), G, D, cfg, "reuse+group")
    zs = [r.z for r in res]
    assert max(np.abs(a - b).sum() for a in zs for b in zs) <= 1e-3
    assert all("group_refine" in r.init for r in res[1:])


@pytest.mark.parametrize("mode", MODES)
def test_sequence_preserves_known_pixels_and_ignores_hidden(models, mode):
    G, D = models
    rng = np.random.default_rng(17)
    frames = [(G.forward(sample_latent(rng, G.latent_dim)), hole(y=t, x=2 * t)) for t in range(6)]
    altered = []
    for img, m in frames:
        other = img.copy()
        other[m == 0] = rng.uniform(-1, 1, other[m == 0].shape)
        altered.append((other, m))
    cfg = InpaintConfig(optim=OptimConfig(max_iters=40))
    a = inpaint_sequence(frames, G, D, cfg, mode)
    b = inpaint_sequence(altered, G, D, cfg, mode)
    for (img, m), ra, rb in zip(frames, a, b):
        known = m.astype(bool)
        assert np.array_equal(ra.image[known], img[known])
        assert np.array_equal(ra.z, rb.z)
        assert ra.trajectory.values == rb.trajectory.values


def test_sequence_errors(models):
    G, D = models
    img = np.zeros(G.shape)
    with pytest.raises(ValueError):
        inpaint_sequence([], G, D)
    with pytest.raises(ValueError):
        inpaint_sequence([(img, hole())], G, D, mode="bidirectional")
    with pytest.raises(ShapeError):
        inpaint_sequence([(img, hole()), (np.zeros((8, 8, 1)), np.ones((8, 8)))], G, D)
