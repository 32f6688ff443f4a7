"""Primal-dual column stream: frozen update values and the three claims."""

import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsched.packing import (
    ClaimsReport,
    PackingColumn,
    PackingError,
    PackingState,
    check_claims,
    objectives,
    pd_process_column,
)

LN2 = math.log(2.0)


def _random_stream(rng, n_slots, n_cols, trace=False):
    """Feed a random column stream through a fresh state."""
    caps = rng.uniform(0.5, 4.0, size=n_slots)
    state = PackingState(caps, trace=trace)
    for k in range(n_cols):
        width = int(rng.integers(1, min(4, n_slots) + 1))
        slots = tuple(int(t) for t in rng.choice(n_slots, size=width, replace=False))
        coeffs = tuple(float(c) for c in rng.uniform(0.05, 3.0, size=width))
        state.process(PackingColumn(k + 1, slots, coeffs))
    return state


class TestColumnValidation:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(PackingError):
            PackingColumn(1, (0, 1), (1.0,))

    def test_rejects_empty(self):
        with pytest.raises(PackingError):
            PackingColumn(1, (), ())

    def test_rejects_duplicate_slots(self):
        with pytest.raises(PackingError):
            PackingColumn(1, (0, 0), (1.0, 1.0))

    def test_rejects_negative_or_nonfinite(self):
        with pytest.raises(PackingError):
            PackingColumn(1, (0,), (-1.0,))
        with pytest.raises(PackingError):
            PackingColumn(1, (0,), (math.inf,))


class TestProcessGuards:
    def test_id_order(self, backend):
        state = PackingState([1.0])
        state.process(PackingColumn(1, (0,), (1.0,)))
        with pytest.raises(PackingError):
            state.process(PackingColumn(3, (0,), (1.0,)))

    def test_slot_range(self, backend):
        state = PackingState([1.0])
        with pytest.raises(PackingError):
            state.process(PackingColumn(1, (1,), (1.0,)))

    def test_all_zero_coefficients(self, backend):
        state = PackingState([1.0])
        with pytest.raises(PackingError):
            state.process(PackingColumn(1, (0,), (0.0,)))

    def test_append_slot(self, backend):
        state = PackingState([1.0])
        idx = state.append_slot(4.0)
        assert idx == 1 and state.n_slots == 2
        assert state.capacity(1) == 4.0
        with pytest.raises(PackingError):
            state.append_slot(0.0)


class TestFrozenUpdates:
    def test_unit_column(self, backend):
        # One slot, unit capacity, unit coefficient: the dual must cross
        # coverage 1 at x = 2 ln 2, leaving y = 1.
        state = PackingState([1.0])
        x = state.process(PackingColumn(1, (0,), (1.0,)))
        assert x == pytest.approx(2.0 * LN2, abs=1e-10)
        assert state.dual_y()[0] == pytest.approx(1.0, abs=1e-9)
        primal, dual = state.objectives()
        assert primal == pytest.approx(1.0, abs=1e-9)
        assert dual == pytest.approx(2.0 * LN2, abs=1e-10)
        assert primal <= dual

    def test_repeat_column_is_free(self, backend):
        state = PackingState([1.0])
        state.process(PackingColumn(1, (0,), (1.0,)))
        y_before = state.dual_y()
        x2 = state.process(PackingColumn(2, (0,), (1.0,)))
        assert x2 == 0.0
        np.testing.assert_array_equal(state.dual_y(), y_before)

    def test_two_slot_column(self, backend):
        # Two unit slots split the dual mass: x = 2 ln 2, y = 1/2 each.
        state = PackingState([1.0, 1.0])
        x = state.process(PackingColumn(1, (0, 1), (1.0, 1.0)))
        assert x == pytest.approx(2.0 * LN2, abs=1e-10)
        np.testing.assert_allclose(state.dual_y(), [0.5, 0.5], atol=1e-9)
        primal, dual = state.objectives()
        assert primal == pytest.approx(1.0, abs=1e-9)
        assert dual == pytest.approx(2.0 * LN2, abs=1e-10)

    def test_scaled_column(self, backend):
        # Capacity 2, coefficient 3: cover(x) = exp(3x/4) - 1, root 4 ln 2 / 3.
        state = PackingState([2.0])
        x = state.process(PackingColumn(1, (0,), (3.0,)))
        assert x == pytest.approx(4.0 * LN2 / 3.0, abs=1e-10)
        assert state.dual_y()[0] == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_mixed_column_against_root_finder(self, backend):
        # Independent root of the coverage crossing for a heterogeneous
        # column, bisected here from scratch.
        caps = np.array([1.0, 2.0])
        coeffs = np.array([2.0, 1.0])
        denom = 2.0 * 2.0  # one column: T_bar = 2, a_bar_max = 2

        def cover(x):
            y = (np.exp(coeffs * x / (2.0 * caps)) - 1.0) / denom
            return float(coeffs @ y)

        lo, hi = 0.0, 10.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if cover(mid) >= 1.0:
                hi = mid
            else:
                lo = mid
        state = PackingState(caps)
        x = state.process(PackingColumn(1, (0, 1), (2.0, 1.0)))
        assert x == pytest.approx(hi, abs=1e-9)
        assert cover(x) == pytest.approx(1.0, abs=1e-9)


class TestStateInvariants:
    def test_duals_monotone(self, backend):
        rng = np.random.default_rng(7)
        caps = rng.uniform(0.5, 4.0, size=5)
        state = PackingState(caps)
        prev = state.dual_y()
        for k in range(60):
            width = int(rng.integers(1, 4))
            slots = tuple(int(t) for t in rng.choice(5, size=width, replace=False))
            coeffs = tuple(float(c) for c in rng.uniform(0.05, 3.0, size=width))
            state.process(PackingColumn(k + 1, slots, coeffs))
            cur = state.dual_y()
            assert np.all(cur >= prev - 1e-15)
            prev = cur
        assert all(x >= 0.0 for x in state.x)

    def test_deterministic_replay(self, backend):
        a = _random_stream(np.random.default_rng(3), 4, 50)
        b = _random_stream(np.random.default_rng(3), 4, 50)
        assert a.x == b.x
        np.testing.assert_array_equal(a.dual_y(), b.dual_y())
        np.testing.assert_array_equal(a.slot_loads(), b.slot_loads())

    def test_coverage_matches_loop(self, backend):
        state = _random_stream(np.random.default_rng(11), 5, 40)
        cov = state.coverage()
        y = state.dual_y()
        for k, (idx, a) in enumerate(state._cols):
            ref = float(np.dot(a, y[idx]))
            assert cov[k] == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_r_hat_formula(self, backend):
        state = _random_stream(np.random.default_rng(13), 4, 30)
        expect = 2.0 * math.log(
            1.0 + state.t_bar_max * state.a_bar_max / state.a_bar_min)
        assert state.r_hat() == pytest.approx(expect, rel=1e-15)
        assert PackingState([1.0]).r_hat() == 0.0

    def test_loads_accumulate(self, backend):
        state = PackingState([1.0, 1.0])
        x1 = state.process(PackingColumn(1, (0,), (1.0,)))
        x2 = state.process(PackingColumn(2, (0, 1), (1.0, 1.0)))
        loads = state.slot_loads()
        assert loads[0] == pytest.approx(x1 + x2, rel=1e-12)
        assert loads[1] == pytest.approx(x2, rel=1e-12)


class TestClaims:
    def test_random_streams_pass_round_by_round(self, backend):
        rng = np.random.default_rng(17)
        for _ in range(5):
            n_slots = int(rng.integers(2, 7))
            caps = rng.uniform(0.5, 4.0, size=n_slots)
            state = PackingState(caps)
            for k in range(80):
                width = int(rng.integers(1, min(4, n_slots) + 1))
                slots = tuple(int(t) for t in
                              rng.choice(n_slots, size=width, replace=False))
                coeffs = tuple(float(c) for c in rng.uniform(0.05, 3.0, size=width))
                state.process(PackingColumn(k + 1, slots, coeffs))
                rep = check_claims(state)
                assert rep.all_ok, (k, rep)

    def test_empty_state_vacuous(self, backend):
        rep = check_claims(PackingState([1.0]))
        assert rep.all_ok
        assert rep.primal == 0.0 and rep.dual == 0.0

    def test_corrupted_duals_fail_coverage(self, backend):
        state = _random_stream(np.random.default_rng(19), 4, 30)
        state._y *= 0.5
        rep = check_claims(state)
        assert not rep.coverage_ok
        assert rep.coverage_margin > 0.0

    def test_inflated_duals_fail_duality(self, backend):
        state = _random_stream(np.random.default_rng(19), 4, 30)
        state._y *= 10.0
        rep = check_claims(state)
        assert not rep.duality_ok

    def test_inflated_loads_fail_load_bound(self, backend):
        state = _random_stream(np.random.default_rng(19), 4, 30)
        state._load += state._caps * state.r_hat()
        rep = check_claims(state)
        assert not rep.load_ok
        assert rep.load_margin > 0.0

    def test_apriori_r_hat_is_looser(self, backend):
        state = _random_stream(np.random.default_rng(23), 4, 30)
        loose = state.r_hat() * 2.0
        rep = check_claims(state, r_hat=loose)
        assert rep.all_ok and rep.r_hat == loose

    def test_report_fields(self, backend):
        state = _random_stream(np.random.default_rng(29), 3, 10)
        rep = check_claims(state)
        assert isinstance(rep, ClaimsReport)
        assert rep.primal <= rep.dual * (1 + 1e-7) + 1e-12
        assert rep.r_hat == pytest.approx(state.r_hat())


class TestTrace:
    def test_trace_records(self, backend):
        state = PackingState([1.0, 1.0], trace=True)
        state.process(PackingColumn(1, (0, 1), (1.0, 1.0)))
        state.process(PackingColumn(2, (0,), (1.0,)))
        assert len(state.trace) == 2
        rec = state.trace[0]
        assert rec["round"] == 1
        assert rec["x_k"] == pytest.approx(2.0 * LN2, abs=1e-10)
        assert {u["t"] for u in rec["y_updates"]} == {0, 1}
        assert all(u["new"] > u["old"] for u in rec["y_updates"])
        assert rec["P"] <= rec["D"] + 1e-12

    def test_dump_trace_jsonl(self, backend):
        state = PackingState([1.0], trace=True)
        state.process(PackingColumn(1, (0,), (1.0,)))
        buf = io.StringIO()
        state.dump_trace(buf)
        lines = buf.getvalue().strip().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["round"] == 1

    def test_dump_without_trace_raises(self, backend):
        state = PackingState([1.0])
        with pytest.raises(PackingError):
            state.dump_trace(io.StringIO())


class TestModuleHelpers:
    def test_wrappers(self, backend):
        state = PackingState([1.0])
        x = pd_process_column(state, PackingColumn(1, (0,), (1.0,)))
        assert x == state.x[0]
        assert objectives(state) == state.objectives()


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 40))
def test_claims_hold_property(seed, n_slots, n_cols):
    """Any admissible stream keeps all three invariants."""
    state = _random_stream(np.random.default_rng(seed), n_slots, n_cols)
    rep = check_claims(state)
    assert rep.all_ok, rep
