import numpy as np
import pytest

from sctnet import checkpoint
from sctnet.gradcheck import rel_error
from sctnet.loss import FeatureExtractor, l1_tonemapped, perceptual, total_loss
from sctnet.tensor import ShapeError

MU_LAW_0_2 = 0.811134890719656457158112939003  # log(1001) / log(5001)


@pytest.fixture(scope="module")
def phi():
    return FeatureExtractor(seed=0, dtype=np.float64)


def img(rng, shape=(3, 16, 16)):
    return rng.uniform(0.0, 1.0, size=shape)


class TestL1:
    def test_identical_is_zero(self, rng):
        x = img(rng)
        assert l1_tonemapped(x, x) == 0.0

    def test_endpoints(self):
        assert l1_tonemapped(np.zeros((3, 2, 2)), np.ones((3, 2, 2))) == 1.0

    def test_scalar_oracle(self):
        assert l1_tonemapped(np.array([0.2]), np.array([0.0])) == pytest.approx(MU_LAW_0_2, rel=1e-14)

    def test_moving_toward_target_decreases(self):
        gt = np.full((3, 4, 4), 0.6)
        vals = [l1_tonemapped(np.full((3, 4, 4), v), gt) for v in (0.1, 0.2, 0.4, 0.5, 0.6)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_tonemapped(np.zeros((3, 2, 2)), np.zeros((3, 2, 3)))


class TestPerceptual:
    def test_identical_is_zero(self, phi, rng):
        x = img(rng)
        assert perceptual(x, x, phi) == 0.0

    def test_non_negative_and_translation_sensitive(self, phi, rng):
        gt = img(rng, (3, 17, 17))
        a, b = gt[:, :16, :16], gt[:, 1:, :16]
        lp = perceptual(a, b, phi)
        assert np.isfinite(lp) and lp > 0

    def test_taps_have_halving_resolution(self, phi, rng):
        taps = phi(img(rng))
        assert [t.shape for t in taps] == [(8, 8, 8), (16, 4, 4), (32, 2, 2)]

    def test_seeded(self, rng):
        x = img(rng)
        a, b = FeatureExtractor(5)(x), FeatureExtractor(5)(x)
        c = FeatureExtractor(6)(x)
        assert all(np.array_equal(p, q) for p, q in zip(a, b))
        assert not np.array_equal(a[0], c[0])

    def test_load_from_checkpoint_file(self, tmp_path, rng):
        src = FeatureExtractor(2, channels=(4, 6))
        path = tmp_path / "phi.ckpt"
        checkpoint.save_checkpoint(path, src.weights)
        loaded = FeatureExtractor.load(path)
        assert loaded.channels == (4, 6)
        x = img(rng).astype(np.float32)
        assert all(np.array_equal(p, q) for p, q in zip(src(x), loaded(x)))


class TestTotal:
    def test_identical_is_zero(self, phi, rng):
        x = img(rng)
        t = total_loss(x, x, phi, with_grad=True)
        assert t.total == 0.0 and t.l1 == 0.0 and t.lp == 0.0

    def test_alpha_zero_is_l1(self, phi, rng):
        p, g = img(rng), img(rng)
        assert total_loss(p, g, phi, alpha=0.0).total == l1_tonemapped(p, g)

    def test_composition(self, phi, rng):
        p, g = img(rng), img(rng)
        t = total_loss(p, g, phi, alpha=0.01)
        assert t.total == pytest.approx(t.l1 + 0.01 * t.lp, rel=1e-15)
        assert t.lp == pytest.approx(perceptual(p, g, phi), rel=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradient_matches_finite_differences(self, phi, seed):
        rng = np.random.default_rng(seed)
        p, g = rng.uniform(0.05, 0.95, (3, 8, 8)), rng.uniform(0.05, 0.95, (3, 8, 8))
        grad = total_loss(p, g, phi, alpha=0.5, with_grad=True).grad
        h = 1e-6
        idx = [tuple(rng.integers(s) for s in p.shape) for _ in range(20)]
        num, ana = [], []
        for i in idx:
            d = np.zeros_like(p)
            d[i] = h
            num.append((total_loss(p + d, g, phi, 0.5).total - total_loss(p - d, g, phi, 0.5).total) / (2 * h))
            ana.append(grad[i])
        assert rel_error(np.array(ana), np.array(num)) < 1e-4
