import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annihilate.particles import (
    EventRecord,
    InvalidState,
    NonFiniteEnergy,
    NonFiniteForce,
    ParticleState,
    energy,
    force,
    validate_state,
    velocities,
)


def make(x, b, gamma=None):
    return ParticleState(
        positions=np.asarray(x, float),
        charges=np.asarray(b, int),
        coupling=-1.0 if gamma is None else gamma,
    )


class TestValidate:
    def test_ordered_pair_ok(self):
        assert validate_state(make([0.0, 1.0], [1, -1])) == []

    def test_out_of_order_charged(self):
        problems = validate_state(make([1.0, 0.0], [1, -1]))
        assert len(problems) == 1

    def test_neutral_unconstrained(self):
        assert validate_state(make([1.0, 0.0], [1, 0])) == []

    def test_bad_charge_rejected(self):
        with pytest.raises(InvalidState):
            make([0.0, 1.0], [2, -1])

    def test_needs_two_particles(self):
        with pytest.raises(InvalidState):
            ParticleState(positions=np.array([0.0]), charges=np.array([1]))


class TestForce:
    def test_single_term(self):
        s = make([-1.0, 1.0], [1, -1], gamma=0.5)
        assert force(s, 0) == pytest.approx(0.25, abs=0)

    def test_neutral_is_exactly_zero(self):
        s = make([0.0, 0.5, 1.0], [1, 0, -1])
        assert force(s, 1) == 0.0

    def test_symmetric_cancellation(self):
        s = make([-1.0, 0.0, 1.0], [1, -1, 1], gamma=1 / 3)
        assert force(s, 1) == pytest.approx(0.0, abs=1e-15)

    def test_coincident_charged_raises(self):
        s = make([0.0, 0.0], [1, -1])
        with pytest.raises(NonFiniteForce):
            force(s, 0)

    def test_matches_vectorized(self):
        rng = np.random.default_rng(3)
        x = np.sort(rng.uniform(-2, 2, 7))
        b = rng.choice([-1, 0, 1], 7)
        b[0], b[1] = 1, -1
        s = make(x, b)
        v = velocities(s)
        for i in range(7):
            assert v[i] == pytest.approx(force(s, i), rel=1e-13, abs=1e-15)


coords = st.lists(
    st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=3, max_size=8
)


def _state_from_draw(xs, signs):
    x = np.sort(np.asarray(xs)) + np.arange(len(xs)) * 1e-2  # enforce gaps
    b = np.array([1 if s else -1 for s in signs[: len(xs)]])
    return make(x, b)


class TestForceProperties:
    @given(coords, st.lists(st.booleans(), min_size=8, max_size=8), st.floats(-3, 3))
    @settings(max_examples=40, deadline=None)
    def test_translation_invariance(self, xs, signs, shift):
        s = _state_from_draw(xs, signs)
        shifted = make(s.positions + shift, s.charges, s.coupling)
        for i in range(s.n):
            assert force(shifted, i) == pytest.approx(force(s, i), rel=1e-9, abs=1e-12)

    @given(coords, st.lists(st.booleans(), min_size=8, max_size=8), st.floats(0.1, 5))
    @settings(max_examples=40, deadline=None)
    def test_scale_covariance(self, xs, signs, alpha):
        s = _state_from_draw(xs, signs)
        scaled = make(alpha * s.positions, s.charges, s.coupling)
        # rounding the scaled coordinates perturbs a near-cancelling sum by
        # eps times the largest term, so the absolute slack follows that scale
        term_scale = s.coupling / float(np.min(np.diff(np.sort(scaled.positions))))
        for i in range(s.n):
            assert force(scaled, i) == pytest.approx(
                force(s, i) / alpha, rel=1e-9, abs=1e-11 * (1.0 + term_scale)
            )

    @given(coords, st.lists(st.booleans(), min_size=8, max_size=8))
    @settings(max_examples=40, deadline=None)
    def test_total_force_vanishes(self, xs, signs):
        s = _state_from_draw(xs, signs)
        v = velocities(s)
        scale = max(1e-30, float(np.max(np.abs(v))))
        assert abs(v.sum()) <= 1e-12 * scale + 1e-15

    @given(coords, st.lists(st.booleans(), min_size=8, max_size=8))
    @settings(max_examples=40, deadline=None)
    def test_charge_flip_invariance(self, xs, signs):
        s = _state_from_draw(xs, signs)
        flipped = make(s.positions, -s.charges, s.coupling)
        assert np.array_equal(velocities(flipped), velocities(s))


class TestEnergy:
    def test_unit_gap_like_charges(self):
        assert energy(make([0.0, 1.0], [1, 1])) == 0.0

    def test_log_gap(self):
        assert energy(make([0.0, np.e], [1, -1])) == pytest.approx(0.25, rel=1e-14)

    def test_single_charged_is_zero(self):
        assert energy(make([0.0, 1.0, 2.0], [0, 1, 0])) == 0.0

    def test_coincident_raises(self):
        with pytest.raises(NonFiniteEnergy):
            energy(make([0.0, 0.0], [1, -1]))


class TestEventRecord:
    def test_charge_conservation_enforced(self):
        with pytest.raises(InvalidState):
            EventRecord(tau=1.0, y=0.0, cluster=(0, 1), pre_charges=(1, -1), post_charges=(1, 0))

    def test_single_survivor_enforced(self):
        with pytest.raises(InvalidState):
            EventRecord(
                tau=1.0, y=0.0, cluster=(0, 1, 2, 3),
                pre_charges=(1, -1, 1, -1), post_charges=(1, -1, 0, 0),
            )

    def test_pair_annihilation_ok(self):
        ev = EventRecord(tau=1.0, y=0.0, cluster=(0, 1), pre_charges=(1, -1), post_charges=(0, 0))
        assert sum(ev.post_charges) == 0
