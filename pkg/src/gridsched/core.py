"""Domain types for scheduling complex power demands on a shared link.

A problem instance is a decision horizon of m slots (numbered 1..m), a
per-slot apparent-power capacity, and a sequence of demands.  Demand k
carries a complex power S_k (VA), a utility u_k > 0, and an inclusive
active interval [t_start, t_end].  A binary schedule is feasible when
the magnitude of the accepted complex sum stays within capacity on
every slot.

Instances canonicalize phases on construction: all demands are rotated
so the smallest phase angle lands on the positive real axis.  For phase
spreads within pi/2 (the only case the algorithms accept) this makes
every component non-negative, which the strict correction mode and the
search pruning in the oracles rely on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Relative slack applied to every capacity comparison.
EPS_FEAS = 1e-9
SCHEMA_VERSION = 1


class InstanceFormatError(ValueError):
    """Raised when instance JSON is malformed or has the wrong schema."""


class InvalidInstanceError(ValueError):
    """Raised when an algorithm receives an instance that fails validation."""

    def __init__(self, violations: Sequence[str]):
        super().__init__("invalid instance: " + "; ".join(violations))
        self.violations = tuple(violations)


@dataclass(frozen=True)
class ComplexPower:
    """Apparent power phasor in VA, rectangular form."""

    re: float
    im: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.re, self.im)

    @property
    def angle(self) -> float:
        return math.atan2(self.im, self.re)

    def rotated(self, angle: float) -> "ComplexPower":
        c = math.cos(angle)
        s = math.sin(angle)
        return ComplexPower(self.re * c - self.im * s, self.re * s + self.im * c)

    def __add__(self, other: "ComplexPower") -> "ComplexPower":
        return ComplexPower(self.re + other.re, self.im + other.im)

    def as_complex(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class Demand:
    """One inelastic demand: all-or-nothing over its active interval."""

    id: int
    power: ComplexPower
    utility: float
    t_start: int
    t_end: int

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"demand id must be >= 1, got {self.id}")
        if not (self.utility > 0.0) or not math.isfinite(self.utility):
            raise ValueError(f"demand {self.id}: utility must be positive")
        if self.t_start < 1 or self.t_end < self.t_start:
            raise ValueError(f"demand {self.id}: empty or negative interval")

    @property
    def magnitude(self) -> float:
        return self.power.magnitude

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start + 1

    def active_at(self, t: int) -> bool:
        return self.t_start <= t <= self.t_end

    def slots(self) -> range:
        return range(self.t_start, self.t_end + 1)


class CapacityProfile:
    """Per-slot capacities C_t > 0.  Slots are numbered 1..m externally;
    ``values`` is the 0-based backing array."""

    def __init__(self, values: Iterable[float]):
        arr = np.array(list(values), dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("capacity profile needs at least one slot")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise ValueError("capacities must be finite and positive")
        arr.setflags(write=False)
        self.values = arr

    def __len__(self) -> int:
        return int(self.values.size)

    def at(self, t: int) -> float:
        if not 1 <= t <= len(self):
            raise IndexError(f"slot {t} outside horizon 1..{len(self)}")
        return float(self.values[t - 1])

    def min(self) -> float:
        return float(self.values.min())

    def min_over(self, t_start: int, t_end: int) -> float:
        if not (1 <= t_start <= t_end <= len(self)):
            raise IndexError(f"range [{t_start}, {t_end}] outside horizon 1..{len(self)}")
        return float(self.values[t_start - 1:t_end].min())

    def __eq__(self, other) -> bool:
        return isinstance(other, CapacityProfile) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class SystemBounds:
    """A-priori parameter ranges the scaling factors are derived from.

    a_min/a_max bound the magnitude-to-utility ratio |S_k|/u_k over
    demands with |S_k| > 0, u_min/u_max bound utilities, T_max bounds
    interval lengths, theta (radians) bounds the phase spread.
    """

    a_min: float
    a_max: float
    u_min: float
    u_max: float
    T_max: int
    theta: float

    def __post_init__(self):
        if not (0.0 < self.a_min <= self.a_max) or not math.isfinite(self.a_max):
            raise ValueError("need 0 < a_min <= a_max < inf")
        if not (0.0 < self.u_min <= self.u_max) or not math.isfinite(self.u_max):
            raise ValueError("need 0 < u_min <= u_max < inf")
        if self.T_max < 1:
            raise ValueError("T_max must be >= 1")
        if not (0.0 <= self.theta <= math.pi / 2.0):
            raise ValueError("theta must lie in [0, pi/2]")


class Instance:
    """Immutable problem instance with canonicalized phases.

    Demand ids must be 1..n in arrival order and every interval must fit
    inside the horizon; those are structural errors.  Violations of the
    declared bounds (NBA, ratio ranges, spread) are data, reported by
    validate_instance rather than raised here.
    """

    def __init__(self, horizon: int, capacities, demands: Iterable[Demand],
                 bounds: SystemBounds):
        if not isinstance(capacities, CapacityProfile):
            capacities = CapacityProfile(capacities)
        if horizon != len(capacities):
            raise ValueError(f"horizon {horizon} != profile length {len(capacities)}")
        demands = tuple(demands)
        for pos, d in enumerate(demands):
            if d.id != pos + 1:
                raise ValueError(f"demand ids must be 1..n in order, got {d.id} at {pos}")
            if d.t_end > horizon:
                raise ValueError(f"demand {d.id}: interval ends past horizon {horizon}")
        self.horizon = horizon
        self.capacities = capacities
        self.rotation = _canonical_rotation(demands)
        self.demands = tuple(_rotate_and_clean(d, self.rotation) for d in demands)
        self.bounds = bounds
        self._arrays = None

    @property
    def n(self) -> int:
        return len(self.demands)

    @property
    def m(self) -> int:
        return self.horizon

    def demand_arrays(self):
        """Kernel-layout views: (s_re, s_im, mag, u, t0, t1) with 0-based
        inclusive slot ranges.  Cached; treat as read-only."""
        if self._arrays is None:
            n = self.n
            s_re = np.empty(n)
            s_im = np.empty(n)
            mag = np.empty(n)
            u = np.empty(n)
            t0 = np.empty(n, dtype=np.int64)
            t1 = np.empty(n, dtype=np.int64)
            for i, d in enumerate(self.demands):
                s_re[i] = d.power.re
                s_im[i] = d.power.im
                mag[i] = d.magnitude
                u[i] = d.utility
                t0[i] = d.t_start - 1
                t1[i] = d.t_end - 1
            self._arrays = (s_re, s_im, mag, u, t0, t1)
        return self._arrays


def _canonical_rotation(demands: Sequence[Demand]) -> float:
    angles = [d.power.angle for d in demands if d.magnitude > 0.0]
    if not angles:
        return 0.0
    return -min(angles)


def _rotate_and_clean(d: Demand, rotation: float) -> Demand:
    if rotation == 0.0:
        return d
    p = d.power.rotated(rotation)
    # Drop numerically insignificant components introduced by the rotation.
    scale = p.magnitude
    re = 0.0 if abs(p.re) <= 1e-12 * scale else p.re
    im = 0.0 if abs(p.im) <= 1e-12 * scale else p.im
    return Demand(d.id, ComplexPower(re, im), d.utility, d.t_start, d.t_end)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


def phase_spread(demands: Sequence[Demand]) -> float:
    """Largest pairwise phase angle difference, in radians.

    Zero-magnitude demands carry no phase and are excluded.  Fewer than
    two phased demands give a spread of 0.
    """
    angles = [d.power.angle for d in demands if d.magnitude > 0.0]
    if len(angles) < 2:
        return 0.0
    return max(angles) - min(angles)


def validate_instance(inst: Instance) -> ValidationReport:
    """Check every demand against the declared bounds.

    Violations are reported, not raised: NBA (a demand larger than the
    smallest capacity anywhere on the horizon), ratio bounds a_min/a_max for
    demands with positive magnitude, utility bounds, interval length,
    and phase spread against theta.
    """
    b = inst.bounds
    violations: list[str] = []
    slop = 1.0 + 1e-12
    cmin = inst.capacities.min() if inst.demands else 0.0
    for d in inst.demands:
        if d.magnitude > cmin * slop:
            violations.append(f"NBA: demand {d.id}")
        if d.magnitude > 0.0:
            ratio = d.magnitude / d.utility
            if ratio < b.a_min / slop:
                violations.append(f"a_min: demand {d.id}")
            if ratio > b.a_max * slop:
                violations.append(f"a_max: demand {d.id}")
        if d.utility < b.u_min / slop:
            violations.append(f"u_min: demand {d.id}")
        if d.utility > b.u_max * slop:
            violations.append(f"u_max: demand {d.id}")
        if d.duration > b.T_max:
            violations.append(f"T_max: demand {d.id}")
    spread = phase_spread(inst.demands)
    if spread > b.theta + 1e-12:
        violations.append(f"theta: spread {spread:.6g} > {b.theta:.6g}")
    return ValidationReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class ScheduleDecision:
    """Binary accept/reject vector in arrival order plus its utility sum."""

    x: tuple[int, ...]
    objective: float

    @classmethod
    def make(cls, flags: Iterable[int], inst: Instance) -> "ScheduleDecision":
        flags = tuple(int(bool(v)) for v in flags)
        if len(flags) != inst.n:
            raise ValueError(f"decision length {len(flags)} != n {inst.n}")
        obj = sum(d.utility for d, f in zip(inst.demands, flags) if f)
        return cls(x=flags, objective=obj)

    def accepted_ids(self) -> tuple[int, ...]:
        return tuple(i + 1 for i, f in enumerate(self.x) if f)


def aggregate_load(decision: ScheduleDecision, inst: Instance, t: int) -> ComplexPower:
    """Complex sum of accepted demands active at slot t (1-based)."""
    if not 1 <= t <= inst.m:
        raise IndexError(f"slot {t} outside horizon 1..{inst.m}")
    re = 0.0
    im = 0.0
    for d, f in zip(inst.demands, decision.x):
        if f and d.active_at(t):
            re += d.power.re
            im += d.power.im
    return ComplexPower(re, im)


def slot_aggregates(decision, inst: Instance):
    """Per-slot complex sums as (re, im) arrays, 0-based."""
    re = np.zeros(inst.m)
    im = np.zeros(inst.m)
    for d, f in zip(inst.demands, decision.x):
        if f:
            re[d.t_start - 1:d.t_end] += d.power.re
            im[d.t_start - 1:d.t_end] += d.power.im
    return re, im


def feasibility_check(decision: ScheduleDecision, inst: Instance,
                      eps: float = EPS_FEAS) -> bool:
    """True when |accepted complex sum| <= C_t (1 + eps) on every slot."""
    re, im = slot_aggregates(decision, inst)
    return bool(np.all(np.hypot(re, im) <= inst.capacities.values * (1.0 + eps)))


# ---------------------------------------------------------------------------
# JSON serialization


def instance_to_dict(inst: Instance) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "horizon": inst.m,
        "capacities": [float(c) for c in inst.capacities.values],
        "bounds": {
            "a_min": inst.bounds.a_min,
            "a_max": inst.bounds.a_max,
            "u_min": inst.bounds.u_min,
            "u_max": inst.bounds.u_max,
            "t_max": inst.bounds.T_max,
            "theta": inst.bounds.theta,
        },
        "demands": [
            {
                "id": d.id,
                "re": d.power.re,
                "im": d.power.im,
                "utility": d.utility,
                "t_start": d.t_start,
                "t_end": d.t_end,
            }
            for d in inst.demands
        ],
    }


def instance_from_dict(data: dict) -> Instance:
    try:
        if data.get("schema") != SCHEMA_VERSION:
            raise InstanceFormatError(f"unsupported schema: {data.get('schema')!r}")
        bounds = SystemBounds(
            a_min=float(data["bounds"]["a_min"]),
            a_max=float(data["bounds"]["a_max"]),
            u_min=float(data["bounds"]["u_min"]),
            u_max=float(data["bounds"]["u_max"]),
            T_max=int(data["bounds"]["t_max"]),
            theta=float(data["bounds"]["theta"]),
        )
        demands = [
            Demand(
                id=int(rec["id"]),
                power=ComplexPower(float(rec["re"]), float(rec["im"])),
                utility=float(rec["utility"]),
                t_start=int(rec["t_start"]),
                t_end=int(rec["t_end"]),
            )
            for rec in data["demands"]
        ]
        return Instance(
            horizon=int(data["horizon"]),
            capacities=CapacityProfile(data["capacities"]),
            demands=demands,
            bounds=bounds,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InstanceFormatError):
            raise
        raise InstanceFormatError(f"bad instance data: {exc}") from exc


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
