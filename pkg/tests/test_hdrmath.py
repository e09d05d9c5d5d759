import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sctnet import hdrmath as H
from sctnet.hdrmath import LdrBracket, LdrImage

# high-precision reference values (30-digit evaluation)
PROJ_HALF_QUARTER = 0.87055056329612413913627001748   # 0.5**2.2 / 0.25
MU_LAW_0_2 = 0.811134890719656457158112939003         # log(1001) / log(5001)
TOP_CODE_STEP = 3.35695408272157800440635388733e-05    # 1 - (1 - 1/65535)**2.2
Q = 1.0 / 65535


def img(value, t, shape=(3, 2, 2)):
    return LdrImage(np.full(shape, value, dtype=np.float64), t)


class TestGammaProject:
    def test_endpoints(self):
        assert np.all(H.gamma_project(img(1.0, 1.0)) == 1.0)
        assert np.all(H.gamma_project(img(0.0, 1.0)) == 0.0)

    def test_scalar_oracle(self):
        assert H.gamma_project(np.array(0.5), 0.25) == pytest.approx(PROJ_HALF_QUARTER, rel=1e-14)

    def test_rejects_non_positive_time(self):
        with pytest.raises(H.DomainError):
            H.gamma_project(np.ones(3), 0.0)
        with pytest.raises(H.DomainError):
            LdrImage(np.ones((3, 1, 1)), -1.0)

    def test_consistent_across_exposure_times(self):
        e = np.linspace(0.01, 0.4, 50)
        a = H.gamma_project((e * 1.0) ** (1 / H.GAMMA), 1.0)
        b = H.gamma_project((e * 2.0) ** (1 / H.GAMMA), 2.0)
        assert np.allclose(a, b, rtol=1e-12)


class TestMuLaw:
    def test_endpoints_exact(self):
        assert H.mu_law(0.0) == 0.0
        assert H.mu_law(1.0) == 1.0

    def test_scalar_oracle(self):
        assert H.mu_law(0.2) == pytest.approx(MU_LAW_0_2, rel=1e-14)

    def test_clamps(self):
        assert H.mu_law(-0.5) == 0.0 and H.mu_law(2.0) == 1.0

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_strictly_monotone(self, a, b):
        if a < b:
            assert H.mu_law(a) < H.mu_law(b)

    def test_gradient_matches_difference_quotient(self):
        x = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        num = (H.mu_law(x + h) - H.mu_law(x - h)) / (2 * h)
        assert np.allclose(H.mu_law_grad(x), num, rtol=1e-6)


class TestTriangleWeights:
    def test_apex_at_mid_grey(self):
        ws, wr, wl = H.triangle_weights(np.full((3, 1, 1), 0.5))
        assert wr[0, 0] == 1.0 and ws[0, 0] == H.TRIANGLE_FLOOR and wl[0, 0] == H.TRIANGLE_FLOOR

    def test_over_exposed_prefers_short(self):
        ws, wr, wl = H.triangle_weights(np.ones((3, 1, 1)))
        assert ws[0, 0] == 1.0 and ws[0, 0] > wr[0, 0] and ws[0, 0] > wl[0, 0]

    def test_positive_sum_over_all_8bit_levels(self):
        z = np.arange(256, dtype=np.float64) / 255
        ref = np.broadcast_to(z, (3, 1, 256))
        total = sum(H.triangle_weights(ref))
        assert total.shape == (1, 256)
        assert np.all(total > 0)

    def test_uses_mean_luminance(self):
        ref = np.array([1.0, 0.5, 0.0]).reshape(3, 1, 1)
        ws, wr, wl = H.triangle_weights(ref)
        assert wr[0, 0] == 1.0


class TestBlend:
    def test_equal_weights_give_mean(self):
        hs = [np.full((3, 2, 2), v) for v in (1.0, 2.0, 6.0)]
        out = H.blend(hs, [np.ones((2, 2))] * 3)
        assert np.allclose(out, 3.0)

    def test_one_hot_selects(self):
        hs = [np.full((3, 2, 2), v) for v in (1.0, 2.0, 6.0)]
        out = H.blend(hs, [np.zeros((2, 2)), np.ones((2, 2)), np.zeros((2, 2))])
        assert np.array_equal(out, hs[1])

    def test_hand_computed(self):
        hs = [np.full((1, 1, 1), v) for v in (0.0, 3.0, 6.0)]
        ws = [np.full((1, 1), v) for v in (1.0, 2.0, 1.0)]
        assert H.blend(hs, ws)[0, 0, 0] == 3.0

    def test_zero_weights_rejected(self):
        with pytest.raises(H.DomainError):
            H.blend([np.ones((1, 1, 1))], [np.zeros((1, 1))])

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 3, 2, 2), elements=st.floats(0, 100)),
           arrays(np.float64, (3, 2, 2), elements=st.floats(1e-3, 1)))
    def test_convex_hull(self, hs, ws):
        out = H.blend(list(hs), list(ws))
        tol = 1e-9 * (1 + hs.max())
        assert np.all(out >= hs.min(axis=0) - tol)
        assert np.all(out <= hs.max(axis=0) + tol)


class TestBracket:
    def test_requires_increasing_times(self):
        with pytest.raises(H.DomainError):
            LdrBracket((img(0.5, 1.0), img(0.5, 1.0), img(0.5, 2.0)))

    def test_requires_equal_shapes(self):
        with pytest.raises(H.DomainError):
            LdrBracket((img(0.5, 1.0), img(0.5, 2.0, (3, 1, 1)), img(0.5, 4.0)))

    def test_reference_is_middle(self):
        b = LdrBracket((img(0.1, 1.0), img(0.5, 2.0), img(0.9, 4.0)))
        assert b.reference.exposure_time == 2.0


class TestDebevec:
    def test_single_image_stack_is_its_projection(self):
        im = img(0.5, 0.5)
        assert np.allclose(H.debevec_merge([im], normalize=False), H.gamma_project(im))

    def test_two_identical_images(self):
        a, b = img(0.5, 1.0), img(0.5, 2.0)
        # both hats are 0.5, so the merge is the plain mean of the two projections
        expected = (0.5 ** 2.2 / 1.0 + 0.5 ** 2.2 / 2.0) / 2
        assert np.allclose(H.debevec_merge([a, b], normalize=False), expected, rtol=1e-14)

    def test_recovers_radiance_within_quantization(self):
        rng = np.random.default_rng(5)
        e = rng.uniform(1e-3, 0.999, size=(3, 16, 16))
        times = [2.0 ** k for k in range(5)]
        stack = [LdrImage(np.round(np.clip((e * t) ** (1 / 2.2), 0, 1) * 65535) / 65535, t)
                 for t in times]
        out = H.debevec_merge(stack)
        assert np.max(np.abs(out - e)) <= TOP_CODE_STEP
        # per-pixel bound: the coarsest radiance step among the exposures that saw the pixel
        steps = [np.where((im.pixels > 0) & (im.pixels < 1),
                          ((im.pixels + Q) ** 2.2 - im.pixels ** 2.2) / im.exposure_time, 0.0)
                 for im in stack]
        assert np.all(np.abs(out - e) <= np.max(steps, axis=0))

    def test_fully_clipped_pixels(self):
        hi = H.debevec_merge([img(1.0, 1.0), img(1.0, 2.0)], normalize=False)
        lo = H.debevec_merge([img(0.0, 1.0), img(0.0, 2.0)], normalize=False)
        assert np.allclose(hi, 1.0) and np.allclose(lo, 0.0)

    def test_duplicate_times_rejected(self):
        with pytest.raises(H.DomainError):
            H.debevec_merge([img(0.5, 1.0), img(0.4, 1.0)])
        with pytest.raises(H.DomainError):
            H.debevec_merge([])
