import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annihilate.moments import (
    ComplexRoots,
    LengthMismatch,
    d_M,
    moments,
    moments_to_elementary,
    reconstruct_positions,
)


class TestMoments:
    def test_direct_evaluation(self):
        assert moments([1.0, 2.0, 3.0]) == pytest.approx([6.0, 7.0, 12.0], abs=0)

    def test_zeros(self):
        assert np.all(moments(np.zeros(5)) == 0.0)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=10), st.randoms())
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, xs, rnd):
        perm = list(xs)
        rnd.shuffle(perm)
        assert moments(perm) == pytest.approx(moments(xs), rel=1e-12, abs=1e-12)


class TestMetric:
    def test_zero_on_permutations(self):
        assert d_M([3.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == pytest.approx(0.0, abs=1e-13)

    def test_singletons(self):
        assert d_M([0.0], [1.0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            d_M([0.0], [1.0, 2.0])

    @given(
        st.lists(st.floats(-5, 5), min_size=2, max_size=6),
        st.data(),
    )
    @settings(max_examples=50, deadline=None)
    def test_triangle_inequality(self, xs, data):
        n = len(xs)
        ys = data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))
        zs = data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))
        assert d_M(xs, zs) <= d_M(xs, ys) + d_M(ys, zs) + 1e-9

    def test_norm_identity(self):
        # ||x||_2^2 equals twice the second moment
        x = np.array([0.3, -1.2, 2.0, 0.7])
        assert float(np.sum(x * x)) == pytest.approx(2.0 * moments(x)[1], rel=1e-14)

    def test_dm_convergence_gives_euclidean(self):
        rng = np.random.default_rng(7)
        x = np.sort(rng.uniform(-2, 2, 5))
        pert = rng.standard_normal(5)
        dms, eucs = [], []
        for m in (1, 2, 4, 8, 16, 32):
            xm = x + pert / m
            dms.append(d_M(xm, x))
            eucs.append(float(np.linalg.norm(np.sort(xm) - x)))
        assert all(b < a for a, b in zip(dms[:-1], dms[1:]))
        assert all(b < a for a, b in zip(eucs[:-1], eucs[1:]))
        assert eucs[-1] < 1e-1 * eucs[0]


class TestNewton:
    def test_two_points(self):
        e = moments_to_elementary(moments([1.0, 2.0]))
        assert e == pytest.approx([1.0, 3.0, 2.0], abs=1e-13)

    def test_zero_moments(self):
        e = moments_to_elementary(np.zeros(4))
        assert e == pytest.approx([1.0, 0.0, 0.0, 0.0, 0.0], abs=0)

    def test_single_point(self):
        e = moments_to_elementary(moments([3.5]))
        assert e == pytest.approx([1.0, 3.5], abs=0)


class TestReconstruct:
    def test_round_trip_simple(self):
        rec = reconstruct_positions(moments([1.0, 2.0, 3.0]))
        assert rec == pytest.approx([1.0, 2.0, 3.0], abs=1e-8)

    def test_double_root(self):
        rec = reconstruct_positions(moments([0.0, 0.0]))
        assert rec == pytest.approx([0.0, 0.0], abs=1e-9)

    def test_symmetric_pair(self):
        rec = reconstruct_positions(moments([-5.0, 5.0]))
        assert rec == pytest.approx([-5.0, 5.0], abs=1e-8)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(1, 13))
            x = np.sort(rng.uniform(-5, 5, n))
            rec = reconstruct_positions(moments(x))
            assert rec == pytest.approx(x, abs=1e-6)

    def test_unrealizable_moments_raise(self):
        # moment vector of the complex pair +-i: monic z^2 + 1
        with pytest.raises(ComplexRoots):
            reconstruct_positions(np.array([0.0, -1.0]))
