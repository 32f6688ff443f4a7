"""Online fractional packing with exponential dual updates.

Columns arrive one at a time.  Column k has non-negative coefficients
a_{k,t} over its active slots; the state raises the column's fractional
value x_k just enough that the covering constraint

    sum_t y_t a_{k,t} >= 1

holds, updating each touched dual variable to

    y_t = max(y_t, (exp(load_t / (2 C_t)) - 1) / (T_max * a_max))

where load_t is the accumulated fractional slot load and T_max / a_max
are running extremes over the columns seen so far.  Slots are 0-based
here; callers that think in 1-based horizon slots translate.  The state
can grow extra slots on the fly (used for per-demand budget slots).

Three invariants are checkable at any point and check_claims audits all
of them: the primal total sum_t C_t y_t never exceeds the dual total
sum_k x_k, every processed column's covering constraint still holds
(y only grows), and every slot load stays within C_t * r where
r = 2 ln(1 + T_max a_max / a_min).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _backend


class PackingError(ValueError):
    """Malformed column or out-of-order processing."""


@dataclass(frozen=True)
class PackingColumn:
    """One packing column: parallel slot/coefficient tuples.

    ``slots`` are 0-based state slot indices.  Coefficients must be
    non-negative; at least one must be positive for the column to be
    processable.
    """

    id: int
    slots: tuple[int, ...]
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.slots) != len(self.coeffs):
            raise PackingError("slots and coeffs must have equal length")
        if not self.slots:
            raise PackingError("column needs a non-empty active set")
        if len(set(self.slots)) != len(self.slots):
            raise PackingError("duplicate slot in column")
        if any(c < 0.0 or not math.isfinite(c) for c in self.coeffs):
            raise PackingError("coefficients must be finite and non-negative")


class PackingState:
    """Mutable stream state.  Single-writer: columns are processed
    strictly in id order 1, 2, ...  Not thread-safe."""

    def __init__(self, capacities: Iterable[float], trace: bool = False):
        caps = np.array(list(capacities), dtype=float)
        if caps.size < 1 or np.any(caps <= 0.0) or not np.all(np.isfinite(caps)):
            raise PackingError("capacities must be finite and positive")
        self._caps = caps
        self._y = np.zeros(caps.size)
        self._load = np.zeros(caps.size)
        self._x: list[float] = []
        self._cols: list[tuple[np.ndarray, np.ndarray]] = []
        self.t_bar_max = 0
        self.a_bar_max = 0.0
        self.a_bar_min = math.inf
        self.trace: Optional[list[dict]] = [] if trace else None

    @property
    def n_slots(self) -> int:
        return int(self._caps.size)

    @property
    def n_columns(self) -> int:
        return len(self._x)

    @property
    def x(self) -> tuple[float, ...]:
        return tuple(self._x)

    def capacity(self, t: int) -> float:
        return float(self._caps[t])

    def dual_y(self) -> np.ndarray:
        return self._y.copy()

    def slot_loads(self) -> np.ndarray:
        return self._load.copy()

    def append_slot(self, capacity: float) -> int:
        """Grow the slot space by one; returns the new 0-based index."""
        if capacity <= 0.0 or not math.isfinite(capacity):
            raise PackingError("slot capacity must be finite and positive")
        self._caps = np.append(self._caps, capacity)
        self._y = np.append(self._y, 0.0)
        self._load = np.append(self._load, 0.0)
        return self._caps.size - 1

    def process(self, column: PackingColumn) -> float:
        """Run the arrival update for the next column; returns x_k >= 0.

        Rejects columns whose id is out of order, whose slots fall
        outside the current slot space, or whose coefficients are all
        zero.
        """
        if column.id != self.n_columns + 1:
            raise PackingError(
                f"column id {column.id} out of order, expected {self.n_columns + 1}")
        if any(not 0 <= t < self.n_slots for t in column.slots):
            raise PackingError(f"column {column.id}: slot outside state")
        pos = [c for c in column.coeffs if c > 0.0]
        if not pos:
            raise PackingError(f"column {column.id}: all-zero coefficients")

        self.t_bar_max = max(self.t_bar_max, len(column.slots))
        self.a_bar_max = max(self.a_bar_max, max(pos))
        self.a_bar_min = min(self.a_bar_min, min(pos))
        denom = self.t_bar_max * self.a_bar_max

        idx = np.asarray(column.slots, dtype=np.int64)
        a = np.asarray(column.coeffs, dtype=float)
        y_before = self._y[idx].copy() if self.trace is not None else None

        x = _backend.impl.pd_min_increase(
            self._y, self._load, self._caps, idx, a, denom, self.a_bar_min)

        self._x.append(x)
        self._cols.append((idx, a))
        if self.trace is not None:
            updates = []
            for i, t in enumerate(idx):
                new = float(self._y[t])
                if new > y_before[i]:
                    updates.append({"t": int(t), "old": float(y_before[i]), "new": new})
            p, d = self.objectives()
            self.trace.append(
                {"round": column.id, "x_k": x, "y_updates": updates, "P": p, "D": d})
        return x

    def objectives(self) -> tuple[float, float]:
        """(primal, dual) totals: sum_t C_t y_t and sum_k x_k."""
        return float(self._caps @ self._y), float(sum(self._x))

    def coverage(self) -> np.ndarray:
        """Per processed column: sum_t y_t a_{k,t} under the current duals."""
        if not self._cols:
            return np.zeros(0)
        idx_cat = np.concatenate([c[0] for c in self._cols])
        a_cat = np.concatenate([c[1] for c in self._cols])
        lens = np.fromiter((len(c[0]) for c in self._cols), dtype=np.int64,
                           count=len(self._cols))
        offsets = np.zeros(len(self._cols), dtype=np.int64)
        np.cumsum(lens[:-1], out=offsets[1:])
        return np.add.reduceat(a_cat * self._y[idx_cat], offsets)

    def r_hat(self) -> float:
        """Load-bound multiplier from the running extremes."""
        if self.n_columns == 0:
            return 0.0
        return 2.0 * math.log(1.0 + self.t_bar_max * self.a_bar_max / self.a_bar_min)

    def dump_trace(self, fh) -> None:
        if self.trace is None:
            raise PackingError("state was created without trace collection")
        for rec in self.trace:
            fh.write(json.dumps(rec) + "\n")


def pd_process_column(state: PackingState, column: PackingColumn) -> float:
    """Process the next arriving column; see PackingState.process."""
    return state.process(column)


def objectives(state: PackingState) -> tuple[float, float]:
    return state.objectives()


@dataclass(frozen=True)
class ClaimsReport:
    """Audit of the three stream invariants.

    duality: primal <= dual.  coverage: every processed column still
    covered.  load: every slot load within capacity * r_hat.  Margins
    are signed; positive margin means violation by that amount.
    """

    duality_ok: bool
    coverage_ok: bool
    load_ok: bool
    primal: float
    dual: float
    duality_margin: float
    coverage_margin: float
    load_margin: float
    r_hat: float

    @property
    def all_ok(self) -> bool:
        return self.duality_ok and self.coverage_ok and self.load_ok


def check_claims(state: PackingState, r_hat: Optional[float] = None,
                 duality_rtol: float = 1e-7, coverage_tol: float = 1e-9,
                 load_rtol: float = 1e-9) -> ClaimsReport:
    """Audit the stream invariants on the current state.

    r_hat defaults to the running-extremes bound; pass an a-priori value
    (necessarily no smaller) to audit against declared system bounds.
    An empty state passes vacuously.
    """
    primal, dual = state.objectives()
    duality_margin = primal - dual
    duality_ok = primal <= dual * (1.0 + duality_rtol) + 1e-12

    cov = state.coverage()
    if cov.size:
        coverage_margin = float(1.0 - cov.min())
    else:
        coverage_margin = -math.inf
    coverage_ok = coverage_margin <= coverage_tol

    r = state.r_hat() if r_hat is None else r_hat
    loads = state.slot_loads()
    limit = state._caps * r * (1.0 + load_rtol) + 1e-12
    over = loads - limit
    load_margin = float(over.max()) if over.size else -math.inf
    load_ok = load_margin <= 0.0

    return ClaimsReport(
        duality_ok=duality_ok,
        coverage_ok=coverage_ok,
        load_ok=load_ok,
        primal=primal,
        dual=dual,
        duality_margin=duality_margin,
        coverage_margin=coverage_margin,
        load_margin=load_margin,
        r_hat=r,
    )
