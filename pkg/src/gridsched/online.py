"""Online acceptance of complex power demands under capacity limits.

Arrivals are classified by size against the capacities on their own
interval: a demand is small when its magnitude is at most delta times
the smallest capacity there, large otherwise.  Each class feeds its own
fractional packing stream (see gridsched.packing):

* Small stream: real slots keep their physical capacities; each small
  demand also gets a private budget slot of capacity u_k with unit
  coefficient, capping its fractional value at u_k.  Real-slot
  coefficients are |S_k|/u_k.
* Large stream: unit capacities on the real slots, coefficients 1/u_k.
  Its fractional solution is a per-slot weighted independent-set
  relaxation.

A single coin tau, drawn once per run, selects which stream's rounding
is live: tau = 1 rounds large demands with probability
alpha * frac / (u_k * r_large), tau = 0 rounds small demands with
probability frac / (2 u_k * r_small).  A correction pass drops any
tentatively accepted demand that would break feasibility, so the final
schedule is always feasible.  Decisions are irrevocable: the outcome
for demand k depends only on the seed and the first k arrivals.

Two correction modes exist.  "exact" re-checks the true quadratic
constraint |aggregate + S_k| <= C_t.  "strict" keeps a scalar residual
per slot, debiting accepted magnitudes, which is more conservative
(rejects some schedules exact admits) but never lets the residual go
negative when all components are non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .core import (
    EPS_FEAS,
    Demand,
    Instance,
    InvalidInstanceError,
    ScheduleDecision,
    SystemBounds,
    validate_instance,
)
from .packing import PackingColumn, PackingState

ALPHA_DEFAULT = 0.138
DELTA_DEFAULT = 0.333

_CORRECTIONS = ("exact", "strict")
_RL_FORMS = ("appendix", "printed")


def scaling_small(bounds: SystemBounds) -> float:
    """Rounding denominator for the small stream."""
    return 2.0 * math.log(1.0 + (bounds.T_max + 1) * bounds.a_max / bounds.a_min)


def scaling_large(bounds: SystemBounds, form: str = "appendix") -> float:
    """Rounding denominator for the large stream.

    The "appendix" form 2 ln(1 + T_max u_max/u_min) matches the slot
    load bound the analysis needs; "printed" (u_min/u_max swapped) is
    kept as a compatibility option.
    """
    if form == "appendix":
        return 2.0 * math.log(1.0 + bounds.T_max * bounds.u_max / bounds.u_min)
    if form == "printed":
        return 2.0 * math.log(1.0 + bounds.T_max * bounds.u_min / bounds.u_max)
    raise ValueError(f"unknown r_large form: {form!r}")


def a3_bound_small(bounds: SystemBounds) -> float:
    """A-priori slot-load multiplier for the small stream.

    The stream mixes ratio coefficients (in [a_min, a_max]) with unit
    budget-slot coefficients and one extra slot per column, so the
    extremes are clamped against 1 and T_max + 1.
    """
    hi = max(bounds.a_max, 1.0)
    lo = min(bounds.a_min, 1.0)
    return 2.0 * math.log(1.0 + (bounds.T_max + 1) * hi / lo)


def a3_bound_large(bounds: SystemBounds) -> float:
    """A-priori slot-load multiplier for the large stream (coefficients
    1/u_k over at most T_max slots)."""
    return 2.0 * math.log(1.0 + bounds.T_max * bounds.u_max / bounds.u_min)


@dataclass(frozen=True)
class AlgorithmParams:
    """Frozen per-run parameters; tau is the shared rounding coin."""

    alpha: float
    delta: float
    r_small: float
    r_large: float
    tau: int
    rng_seed: int
    correction: str = "exact"
    rl_form: str = "appendix"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.r_small <= 0.0 or self.r_large <= 0.0:
            raise ValueError("scaling factors must be positive")
        if self.tau not in (0, 1):
            raise ValueError("tau must be 0 or 1")
        if self.correction not in _CORRECTIONS:
            raise ValueError(f"correction must be one of {_CORRECTIONS}")
        if self.rl_form not in _RL_FORMS:
            raise ValueError(f"rl_form must be one of {_RL_FORMS}")


def classify_demand(d: Demand, inst: Instance, delta: float) -> str:
    """"S" when |S_k| <= delta * min capacity over the demand's own
    interval, "L" otherwise.  Zero-magnitude demands are small."""
    return "S" if d.magnitude <= delta * inst.capacities.min_over(d.t_start, d.t_end) else "L"


def build_small_column(d: Demand, state: PackingState) -> PackingColumn:
    """Column for the small stream; appends the demand's budget slot
    (capacity u_k) to the state as a side effect."""
    budget_slot = state.append_slot(d.utility)
    ratio = d.magnitude / d.utility
    slots = tuple(t - 1 for t in d.slots()) + (budget_slot,)
    coeffs = (ratio,) * d.duration + (1.0,)
    return PackingColumn(id=state.n_columns + 1, slots=slots, coeffs=coeffs)


def build_large_column(d: Demand, state: PackingState) -> PackingColumn:
    """Column for the large stream: coefficient 1/u_k on each real slot."""
    slots = tuple(t - 1 for t in d.slots())
    coeffs = (1.0 / d.utility,) * d.duration
    return PackingColumn(id=state.n_columns + 1, slots=slots, coeffs=coeffs)


@dataclass(frozen=True)
class TraceRecord:
    k: int
    cls: str
    frac: float
    p: float
    draw: float
    corrected: bool
    x_k: int
    remaining_min: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "class": self.cls,
            "frac": self.frac,
            "p": self.p,
            "draw": self.draw,
            "corrected": self.corrected,
            "x_k": self.x_k,
            "remaining_min": self.remaining_min,
        }


class OnlineState:
    """Mutable run state; arrivals must be fed in instance order.

    Single-writer, not thread-safe.  With rng=None the state only
    supports fractional_step (no rounding), which is how the cached
    Monte-Carlo path reuses the deterministic part.
    """

    def __init__(self, inst: Instance, params: AlgorithmParams,
                 rng: Optional[np.random.Generator], pd_trace: bool = False):
        self.inst = inst
        self.params = params
        self.rng = rng
        self.small = PackingState(inst.capacities.values, trace=pd_trace)
        self.large = PackingState(np.ones(inst.m), trace=pd_trace)
        self.classes: list[str] = []
        self.fracs: list[float] = []
        self.decisions: list[int] = []
        self.trace: list[TraceRecord] = []
        self.clamped = 0
        self._agg_re = np.zeros(inst.m)
        self._agg_im = np.zeros(inst.m)
        self._cprime = inst.capacities.values.copy()
        self._probs = np.zeros(inst.n)
        self._draws = np.zeros(inst.n)
        self._x_out = np.zeros(inst.n, dtype=np.int8)
        self._corr_out = np.zeros(inst.n, dtype=np.int8)
        self._rem_out = np.zeros(inst.n)

    @property
    def next_id(self) -> int:
        return len(self.classes) + 1

    def _expect(self, d: Demand) -> None:
        if d.id != self.next_id:
            raise ValueError(f"arrival out of order: got {d.id}, expected {self.next_id}")
        if d != self.inst.demands[d.id - 1]:
            raise ValueError(f"demand {d.id} does not match the instance")

    def fractional_step(self, d: Demand) -> tuple[str, float]:
        """Classify the arrival and raise its stream's fractional value."""
        self._expect(d)
        cls = classify_demand(d, self.inst, self.params.delta)
        if cls == "S":
            col = build_small_column(d, self.small)
            frac = self.small.process(col)
        else:
            col = build_large_column(d, self.large)
            frac = self.large.process(col)
        self.classes.append(cls)
        self.fracs.append(frac)
        return cls, frac

    def probability(self, cls: str, frac: float, utility: float) -> float:
        """Coin-gated rounding probability, clamped to [0, 1]."""
        p = self.params
        if cls == "S":
            raw = (1 - p.tau) * frac / (2.0 * utility * p.r_small)
        else:
            raw = p.alpha * p.tau * frac / (utility * p.r_large)
        if raw > 1.0:
            self.clamped += 1
            return 1.0
        return raw

    def round_and_correct(self, d: Demand, cls: str, frac: float) -> int:
        """Draw the demand's coin and run the feasibility correction."""
        if self.rng is None:
            raise ValueError("state has no rng; rounding unavailable")
        k = d.id - 1
        self._probs[k] = self.probability(cls, frac, d.utility)
        self._draws[k] = self.rng.random()
        s_re, s_im, mag, _, t0, t1 = self.inst.demand_arrays()
        sl = slice(k, k + 1)
        _backend.impl.correction_scan(
            s_re[sl], s_im[sl], mag[sl], t0[sl], t1[sl],
            self._probs[sl], self._draws[sl], self.inst.capacities.values,
            self._agg_re, self._agg_im, self._cprime,
            self.params.correction == "strict", EPS_FEAS,
            self._x_out[sl], self._corr_out[sl], self._rem_out[sl])
        x_k = int(self._x_out[k])
        self.decisions.append(x_k)
        self.trace.append(TraceRecord(
            k=d.id, cls=cls, frac=frac, p=float(self._probs[k]),
            draw=float(self._draws[k]), corrected=bool(self._corr_out[k]),
            x_k=x_k, remaining_min=float(self._rem_out[k])))
        return x_k

    def process_arrival(self, d: Demand) -> int:
        """Full online step for one arrival; returns the 0/1 decision."""
        cls, frac = self.fractional_step(d)
        return self.round_and_correct(d, cls, frac)

    @property
    def remaining(self) -> np.ndarray:
        """Per-slot residual headroom: scalar residuals in strict mode,
        capacity minus aggregate magnitude in exact mode."""
        if self.params.correction == "strict":
            return self._cprime.copy()
        return self.inst.capacities.values - np.hypot(self._agg_re, self._agg_im)


@dataclass(frozen=True)
class OnlineResult:
    decision: ScheduleDecision
    objective: float
    tau: int
    seed: int
    params: AlgorithmParams
    trace: tuple[TraceRecord, ...]
    classes: tuple[str, ...]
    fracs: tuple[float, ...]
    clamped: int
    small_state: PackingState
    large_state: PackingState


def _require_valid(inst: Instance) -> None:
    rep = validate_instance(inst)
    if not rep.ok:
        raise InvalidInstanceError(rep.violations)


def run_online(inst: Instance, seed: int, *, correction: str = "exact",
               rl_form: str = "appendix", alpha: float = ALPHA_DEFAULT,
               delta: float = DELTA_DEFAULT, pd_trace: bool = False) -> OnlineResult:
    """One full online run over the instance's arrival sequence.

    The rng draws one uniform for tau, then one per arrival, so the
    trace for a prefix is independent of later arrivals.
    """
    _require_valid(inst)
    rng = np.random.Generator(np.random.Philox(seed))
    tau = 1 if rng.random() < 0.5 else 0
    params = AlgorithmParams(
        alpha=alpha, delta=delta,
        r_small=scaling_small(inst.bounds),
        r_large=scaling_large(inst.bounds, rl_form),
        tau=tau, rng_seed=seed, correction=correction, rl_form=rl_form)
    state = OnlineState(inst, params, rng, pd_trace=pd_trace)
    for d in inst.demands:
        state.process_arrival(d)
    decision = ScheduleDecision.make(state.decisions, inst)
    return OnlineResult(
        decision=decision, objective=decision.objective, tau=tau, seed=seed,
        params=params, trace=tuple(state.trace), classes=tuple(state.classes),
        fracs=tuple(state.fracs), clamped=state.clamped,
        small_state=state.small, large_state=state.large)


@dataclass(frozen=True)
class FractionalPass:
    """Deterministic part of a run, reusable across rounding seeds."""

    classes: tuple[str, ...]
    fracs: np.ndarray
    p_small: np.ndarray
    p_large: np.ndarray
    r_small: float
    r_large: float
    clamped_small: int
    clamped_large: int
    small_state: PackingState
    large_state: PackingState


def fractional_pass(inst: Instance, *, rl_form: str = "appendix",
                    alpha: float = ALPHA_DEFAULT, delta: float = DELTA_DEFAULT,
                    pd_trace: bool = False) -> FractionalPass:
    """Run classification and the packing streams without any rounding."""
    _require_valid(inst)
    r_small = scaling_small(inst.bounds)
    r_large = scaling_large(inst.bounds, rl_form)
    params = AlgorithmParams(
        alpha=alpha, delta=delta, r_small=r_small, r_large=r_large,
        tau=0, rng_seed=0, correction="exact", rl_form=rl_form)
    state = OnlineState(inst, params, rng=None, pd_trace=pd_trace)
    for d in inst.demands:
        state.fractional_step(d)

    n = inst.n
    fracs = np.asarray(state.fracs)
    p_small = np.zeros(n)
    p_large = np.zeros(n)
    clamped_small = 0
    clamped_large = 0
    for k, d in enumerate(inst.demands):
        if state.classes[k] == "S":
            raw = fracs[k] / (2.0 * d.utility * r_small)
            if raw > 1.0:
                clamped_small += 1
                raw = 1.0
            p_small[k] = raw
        else:
            raw = alpha * fracs[k] / (d.utility * r_large)
            if raw > 1.0:
                clamped_large += 1
                raw = 1.0
            p_large[k] = raw
    return FractionalPass(
        classes=tuple(state.classes), fracs=fracs, p_small=p_small,
        p_large=p_large, r_small=r_small, r_large=r_large,
        clamped_small=clamped_small, clamped_large=clamped_large,
        small_state=state.small, large_state=state.large)


@dataclass(frozen=True)
class RoundingResult:
    x: np.ndarray
    tau: int
    corrected: np.ndarray
    remaining_min: np.ndarray
    objective: float


def rounding_pass(inst: Instance, fp: FractionalPass, seed: int,
                  correction: str = "exact") -> RoundingResult:
    """Replay the random part of a run on top of a cached fractional pass.

    Produces exactly the decisions run_online(inst, seed) would: same
    rng layout (tau first, one draw per arrival), same correction scan.
    """
    if correction not in _CORRECTIONS:
        raise ValueError(f"correction must be one of {_CORRECTIONS}")
    n = inst.n
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.random(n + 1)
    tau = 1 if draws[0] < 0.5 else 0
    probs = fp.p_large if tau == 1 else fp.p_small
    s_re, s_im, mag, u, t0, t1 = inst.demand_arrays()
    caps = inst.capacities.values
    x = np.zeros(n, dtype=np.int8)
    corr = np.zeros(n, dtype=np.int8)
    rem = np.zeros(n)
    _backend.impl.correction_scan(
        s_re, s_im, mag, t0, t1, probs, draws[1:], caps,
        np.zeros(inst.m), np.zeros(inst.m), caps.copy(),
        correction == "strict", EPS_FEAS, x, corr, rem)
    objective = float(u @ (x != 0))
    return RoundingResult(x=x, tau=tau, corrected=corr, remaining_min=rem,
                          objective=objective)
