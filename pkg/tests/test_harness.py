import math

import numpy as np
import pytest

from annihilate import harness as Hn
from annihilate.integrator import IntegratorConfig, evolve
from annihilate.levelset import from_particles


class TestSampler:
    def test_pair_bump_crossings(self):
        eps = 1 / 8
        a = 0.3
        st = Hn.sample_particles(Hn.pair_bump(eps).u0, 8, a)
        x0 = math.sqrt(1.0 / a - 1.0)
        assert st.n == 2
        assert st.positions == pytest.approx([-x0, x0], abs=1e-10)
        assert tuple(st.charges) == (1, -1)
        assert st.coupling == eps

    def test_sigmoid_gives_n_positive_particles(self):
        st = Hn.sample_particles(Hn.CATALOG["sigmoid"].u0, 12, 0.5, window=(-2, 2))
        assert st.n == 12
        assert np.all(st.charges == 1)
        # no annihilations ever: all charges equal
        traj = evolve(st, IntegratorConfig(t_end=0.5))
        assert not traj.events

    def test_constant_data_has_no_particles(self):
        assert Hn.sample_particles(lambda x: 0.25, 8, 0.5) is None

    def test_flat_at_level_rejected(self):
        with pytest.raises(Hn.DegenerateCrossing):
            # equals the a=0.5 level of n=2 on a whole interval
            Hn.sample_particles(lambda x: 0.25 if abs(x) < 1 else 0.0, 2, 0.5)

    def test_sandwich_bound(self):
        u0 = Hn.CATALOG["double_bump"].u0
        for n in (8, 16, 32):
            st = Hn.sample_particles(u0, n, 0.5, window=(-4, 4))
            base = Hn.quantized_level_below(u0(-4.0), 1.0 / n, 0.5)
            u_n = from_particles(st, eps=1.0 / n, base=base)
            xs = np.linspace(-4, 4, 4001)
            diff = np.array([u0(x) for x in xs]) - u_n(xs)
            assert np.min(diff) >= -1e-12
            assert np.max(diff) <= 1.0 / n + 1e-12

    def test_offset_families_never_interleave(self):
        # crossing trajectories of two offsets keep their merged ordering
        u0 = Hn.CATALOG["double_bump"].u0
        n = 8
        runs = {}
        ts = tuple(np.linspace(0.0, 0.3, 7))
        for a in (0.25, 0.75):
            st = Hn.sample_particles(u0, n, a, window=(-4, 4))
            runs[a] = evolve(st, IntegratorConfig(t_end=0.3, sample_times=ts))
        orders = []
        for t in ts:
            sa = runs[0.25].state_at(t, tol=1e-9)
            sb = runs[0.75].state_at(t, tol=1e-9)
            merged = []
            for tag, s in (("a", sa), ("b", sb)):
                for i in range(s.n):
                    if s.charges[i] != 0:
                        merged.append((float(s.positions[i]), tag, i))
            alive = {(tag, i) for _, tag, i in merged}
            orders.append((alive, tuple(k for _, *k in sorted(merged))))
        # restrict each later ordering to pairs alive at both times
        for (alive0, order0), (alive1, order1) in zip(orders[:-1], orders[1:]):
            common = alive0 & alive1
            o0 = [k for k in order0 if tuple(k) in common]
            o1 = [k for k in order1 if tuple(k) in common]
            assert o0 == o1


class TestConvergence:
    def test_small_ladder_monotone(self):
        spec = Hn.ExperimentSpec(
            datum="sigmoid", ns=(8, 16, 32), t_end=0.2, ref_h=1 / 64, ref_rho=1 / 8
        )
        res = Hn.run_convergence(spec)
        errs = res.errors()
        assert res.monotone
        assert errs[-1] < errs[0]
        assert all(r.error is None for r in res.rows)

    def test_deterministic_tables(self):
        spec = Hn.ExperimentSpec(
            datum="sigmoid", ns=(8, 16), t_end=0.1, ref_h=1 / 64, ref_rho=1 / 8
        )
        r1 = Hn.run_convergence(spec)
        r2 = Hn.run_convergence(spec, threads=2)
        for a, b in zip(r1.rows, r2.rows):
            assert (a.n, a.e_n, a.events) == (b.n, b.e_n, b.events)

    def test_constant_datum_has_zero_error(self):
        spec = Hn.ExperimentSpec(
            datum="constant", ns=(4, 16), t_end=0.1, ref_h=1 / 64, ref_rho=1 / 8
        )
        res = Hn.run_convergence(spec)
        assert all(r.e_n == 0.0 and r.events == 0 for r in res.rows)

    def test_pair_bump_ladder_is_exactly_quantization(self):
        # against the closed-form solution the error is the level gap 1/n
        spec = Hn.ExperimentSpec(datum="pair_bump", ns=(4, 8, 16), t_end=0.5)
        res = Hn.run_convergence(spec)
        for row in res.rows:
            assert row.error is None
            assert row.e_n == pytest.approx(1.0 / row.n, rel=1e-9)
        assert res.monotone

    def test_sampling_error_floor(self):
        # at t=0 the error is exactly the quantization gap, below 1/n
        spec = Hn.ExperimentSpec(
            datum="sigmoid", ns=(8,), t_end=0.05, ref_h=1 / 64, ref_rho=1 / 8
        )
        res = Hn.run_convergence(spec)
        assert res.rows[0].e_n <= 1.0 / 8 + 0.02


class TestPropertySuite:
    def test_small_suite_passes(self):
        rep = Hn.run_property_suite(seed=3, sizes=(4, 6, 8), runs=12, t_end=0.8)
        assert rep.all_passed, {
            k: (c.margin, c.detail) for k, c in rep.checks.items() if not c.passed
        }
        assert rep.runs_with_events >= 6

    def test_report_serializes(self):
        import json

        rep = Hn.run_property_suite(seed=4, sizes=(4,), runs=3, t_end=0.5)
        payload = json.loads(rep.to_json())
        assert payload["runs"] == 3
        assert set(payload["checks"]) == set(rep.checks)


class TestStability:
    def test_monotone_in_perturbation(self):
        rng = np.random.default_rng(8)
        base = Hn._triple_collision_fixture()
        sups = Hn.stability_sweep(base, (1e-2, 1e-3, 1e-4), 1.0, rng)
        assert sups[0] > sups[1] > sups[2]

    def test_fixture_has_three_collisions(self):
        traj = evolve(Hn._triple_collision_fixture(), IntegratorConfig(t_end=1.0))
        assert len(traj.events) == 3
