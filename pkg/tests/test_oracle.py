"""Exact oracle, FCFS baseline, ratio estimator, and relaxation bounds."""

import math

import numpy as np
import pytest

from gridsched.core import ScheduleDecision, feasibility_check
from gridsched.online import DELTA_DEFAULT, fractional_pass, rounding_pass
from gridsched.oracle import (
    MAX_BRUTE_N,
    InstanceTooLargeError,
    brute_force_opt,
    empirical_ratio,
    fcfs,
    fwmis_feasible,
    fwmis_round_correct,
    fwmis_slot_load,
)
from gridsched.workload import GeneratorConfig, gen_instance

from conftest import bounds_for, mk_demand, mk_instance

from lp_oracle import (
    grid_opt_star,
    lp_fwmis,
    lp_opt_star,
    lp_opt_star_large,
    lp_opt_star_small,
)


def _random_unit_instance(rng, n=None, m=None, theta=math.pi / 2):
    """Small O(1)-scale instance, valid under its own realized bounds."""
    n = n or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, 4))
    caps = rng.uniform(1.0, 3.0, size=m)
    demands = []
    for k in range(n):
        t0 = int(rng.integers(1, m + 1))
        t1 = int(rng.integers(t0, m + 1))
        mag = rng.uniform(0.05, caps.min())
        phase = rng.uniform(0.0, theta)
        u = rng.uniform(0.5, 2.0)
        demands.append(mk_demand(k + 1, mag * math.cos(phase),
                                 mag * math.sin(phase), u, t0, t1))
    return mk_instance(caps, demands, bounds=bounds_for(demands, slack=1.0))


class TestBruteForce:
    def test_single_slot_knapsack(self):
        inst = mk_instance([1.0], [mk_demand(1, 1, 0, 1.0, 1),
                                   mk_demand(2, 1, 0, 2.0, 1)])
        res = brute_force_opt(inst)
        assert res.objective == 2.0
        assert res.decision.accepted_ids() == (2,)

    def test_orthogonal_pair_fits(self):
        caps = [math.sqrt(2.0)]
        inst = mk_instance(caps, [mk_demand(1, 1, 0, 1.0, 1),
                                  mk_demand(2, 0, 1, 2.0, 1)],
                           theta=math.pi / 2)
        res = brute_force_opt(inst)
        assert res.objective == 3.0
        assert res.decision.accepted_ids() == (1, 2)

    def test_quadrature_aware(self):
        # Magnitudes sum to 7 but the complex sum is exactly 5.
        inst = mk_instance([5.0], [mk_demand(1, 3, 0, 1.0, 1),
                                   mk_demand(2, 0, 4, 1.0, 1)],
                           theta=math.pi / 2)
        assert brute_force_opt(inst).objective == 2.0

    def test_tie_break_smallest_ids(self):
        inst = mk_instance([1.0], [mk_demand(1, 1, 0, 1.0, 1),
                                   mk_demand(2, 1, 0, 1.0, 1)])
        res = brute_force_opt(inst)
        assert res.objective == 1.0
        assert res.decision.accepted_ids() == (1,)

    def test_empty_instance(self):
        inst = mk_instance([1.0], [])
        res = brute_force_opt(inst)
        assert res.objective == 0.0 and res.explored >= 1

    def test_size_cap(self):
        n = MAX_BRUTE_N + 1
        demands = [mk_demand(i + 1, 0.1, 0, 1.0, 1) for i in range(n)]
        inst = mk_instance([100.0], demands)
        with pytest.raises(InstanceTooLargeError):
            brute_force_opt(inst)

    def test_output_feasible_and_dominant(self, backend):
        rng = np.random.default_rng(5)
        for _ in range(8):
            inst = _random_unit_instance(rng)
            res = brute_force_opt(inst)
            assert feasibility_check(res.decision, inst)
            assert res.objective >= fcfs(inst).objective - 1e-12
            fp = fractional_pass(inst)
            for seed in range(5):
                rp = rounding_pass(inst, fp, seed)
                assert rp.objective <= res.objective + 1e-9

    def test_explored_bounded(self):
        inst = mk_instance([10.0], [mk_demand(i + 1, 1, 0, 1.0, 1)
                                    for i in range(6)])
        res = brute_force_opt(inst)
        assert 1 <= res.explored <= 2 ** 7


class TestFcfs:
    def test_greedy_blocking(self):
        # The early cheap demand occupies the slot the late valuable
        # demand needed.
        inst = mk_instance([1.0], [mk_demand(1, 1, 0, 1.0, 1),
                                   mk_demand(2, 1, 0, 100.0, 1)])
        dec = fcfs(inst)
        assert dec.x == (1, 0)
        assert dec.objective == 1.0
        assert brute_force_opt(inst).objective == 100.0

    def test_accepts_when_it_fits(self):
        inst = mk_instance([5.0], [mk_demand(1, 3, 0, 1.0, 1),
                                   mk_demand(2, 0, 4, 1.0, 1)],
                           theta=math.pi / 2)
        assert fcfs(inst).x == (1, 1)

    def test_always_feasible(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            inst = _random_unit_instance(rng)
            assert feasibility_check(fcfs(inst), inst)


class TestEmpiricalRatio:
    def test_requires_enough_runs(self):
        inst = mk_instance([1.0], [mk_demand(1, 0.5, 0, 1.0, 1)])
        with pytest.raises(ValueError):
            empirical_ratio(inst, runs=99)

    def test_single_demand_matches_coin_math(self, backend):
        inst = mk_instance([10.0], [mk_demand(1, 2, 0, 4.0, 1)])
        fp = fractional_pass(inst)
        p = float(fp.p_small[0])
        assert 0.0 < p <= 1.0
        est = empirical_ratio(inst, runs=4000, master_seed=1)
        q = 0.5 * p  # tau favors the small stream half the time
        se = math.sqrt(q * (1 - q) / 4000)
        assert abs(est.mean - q) <= 4 * se
        assert est.opt_value == 4.0
        assert not est.degenerate and est.ratios_meaningful

    def test_degenerate_empty_instance(self, backend):
        inst = mk_instance([1.0], [])
        est = empirical_ratio(inst, runs=100)
        assert est.degenerate and est.mean == 1.0 and est.opt_value == 0.0

    def test_ratios_never_exceed_one(self, backend):
        inst = _random_unit_instance(np.random.default_rng(17), n=5, m=2)
        opt = brute_force_opt(inst).objective
        fp = fractional_pass(inst)
        for seed in range(200):
            rp = rounding_pass(inst, fp, np.random.SeedSequence((0, seed)))
            assert rp.objective <= opt + 1e-9


class TestFwmisHelpers:
    def test_slot_load(self):
        load = fwmis_slot_load([0, 1], [1, 2], [2.0, 4.0], [1.0, 2.0], m=3)
        np.testing.assert_allclose(load, [0.5, 1.0, 0.5])

    def test_feasible(self):
        assert fwmis_feasible([0], [0], [1.0], [1.0], m=1)
        assert not fwmis_feasible([0, 0], [0, 0], [1.0, 1.0], [1.0, 0.5], m=1)

    def test_round_correct_conflict(self, backend):
        # Both selected (draw < 0.5), overlapping: the earlier one wins.
        x = fwmis_round_correct([0, 0], [1, 1], [1.0, 1.0], [1.0, 1.0],
                                draws=[0.1, 0.1])
        assert list(x) == [1, 0]

    def test_round_correct_disjoint(self, backend):
        x = fwmis_round_correct([0, 2], [1, 3], [1.0, 1.0], [1.0, 1.0],
                                draws=[0.1, 0.1])
        assert list(x) == [1, 1]

    def test_round_correct_not_selected(self, backend):
        x = fwmis_round_correct([0], [0], [1.0], [1.0], draws=[0.9])
        assert list(x) == [0]

    def test_survival_bound_smoke(self, backend):
        # Fuller Monte-Carlo treatment lives in the acceptance suite.
        rng = np.random.default_rng(23)
        n, m = 6, 4
        t0 = np.sort(rng.integers(0, m, size=n))
        t1 = np.minimum(t0 + rng.integers(0, 2, size=n), m - 1)
        u = rng.uniform(0.5, 2.0, size=n)
        x_tilde = u * rng.uniform(0.0, 1.0, size=n)
        load = fwmis_slot_load(t0, t1, u, x_tilde, m)
        scale = max(1.0, load.max())
        x_tilde = x_tilde / scale
        assert fwmis_feasible(t0, t1, u, x_tilde, m)
        total = 0.0
        trials = 4000
        for r in range(trials):
            kept = fwmis_round_correct(t0, t1, u, x_tilde, rng.random(n))
            total += float(u @ kept)
        assert total / trials >= 0.25 * x_tilde.sum() * 0.9


class TestRelaxationBounds:
    """Fractional-optimum inequalities on desk-scale instances.

    The magnitude relaxation is linear, so the LP solves it exactly;
    the literal grid oracle cross-checks the LP on n <= 3.
    """

    def test_grid_agrees_with_lp(self):
        rng = np.random.default_rng(31)
        for _ in range(6):
            inst = _random_unit_instance(rng, n=int(rng.integers(1, 4)), m=2)
            lp = lp_opt_star(inst)
            grid = grid_opt_star(inst)
            total_u = sum(d.utility for d in inst.demands)
            assert abs(lp - grid) <= 2e-3 * max(total_u, 1.0)
            assert grid <= lp + 1e-9  # grid points are feasible for the LP

    def test_split_upper_bound(self):
        rng = np.random.default_rng(37)
        for _ in range(10):
            inst = _random_unit_instance(rng)
            whole = lp_opt_star(inst)
            split = lp_opt_star_small(inst) + lp_opt_star_large(inst)
            assert whole <= split + 1e-7 * max(1.0, split)

    def test_unit_relaxation_lower_bound(self):
        delta = DELTA_DEFAULT
        rng = np.random.default_rng(41)
        checked = 0
        for _ in range(15):
            inst = _random_unit_instance(rng)
            large = lp_opt_star_large(inst)
            if large <= 0.0:
                continue
            checked += 1
            fw = lp_fwmis(inst)
            assert fw >= (delta ** 2 / 2.0) * large - 1e-7
        assert checked >= 3

    def test_relaxation_dominates_integer_by_cone_factor(self):
        rng = np.random.default_rng(43)
        for _ in range(10):
            inst = _random_unit_instance(rng)
            opt = brute_force_opt(inst).objective
            star = lp_opt_star(inst)
            theta = inst.bounds.theta
            assert star >= math.cos(theta / 2.0) * opt - 1e-7

    def test_relaxation_vs_generated_workload(self):
        # Same inequalities on the realistic generator output.
        for seed in (0, 1):
            inst = gen_instance(GeneratorConfig(n=10, m=3, seed=seed))
            scale = lp_opt_star(inst)
            split = lp_opt_star_small(inst) + lp_opt_star_large(inst)
            assert scale <= split + 1e-7 * max(1.0, split)
            opt = brute_force_opt(inst).objective
            assert scale >= math.cos(inst.bounds.theta / 2.0) * opt - 1e-7 * max(1.0, opt)
