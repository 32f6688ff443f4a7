"""Radial feeder voltage model and its capacity-form reduction.

A path feeder has nodes 0..d (0 is the substation) joined by edges with
series impedance z_i (ohm).  Working in squared voltage magnitudes v_i
(volt^2), the branch flow equations for edge (i, i+1) carrying sending
power flow F_i (VA, complex) with current-squared ell_i are

    ell_i   = |F_i|^2 / v_i
    v_{i+1} = v_i + |z_i|^2 ell_i - 2 (z_i^R F_i^R + z_i^I F_i^I)
    F_i     = F_{i+1} + load_{i+1} + z_{i+1} ell_{i+1}   (F beyond d is 0)

Dropping the loss terms gives the linearized model, where the drop at
node i is 2 * sum over upstream edges of Re(conj(z_j) F_j^lin).  Under
the requirement v_i >= v_min at every node and every slot, and assuming
each demand's z^R S^R + z^I S^I products are non-negative on its path,
the binding node is the deepest one and the constraint collapses to a
scalar budget: each demand contributes a fixed voltage-drop coefficient
and the per-slot budget is v_hat = (v0 - v_min) / 2.  That reduction is
what to_cspv_instance emits, so the capacity engine can schedule
against voltage limits unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import CapacityProfile, ComplexPower, Demand, Instance, SystemBounds

# 700 MCM Cu XLPE cable, ohm per km.
CANADIAN_Z_PER_KM = complex(0.1529, 0.1406)

_SWEEP_TOL = 1e-6
_SWEEP_MAX_ITER = 100


class VoltageCollapseError(RuntimeError):
    """Backward-forward sweep failed to converge (or v went nonpositive)."""


class FeederConfigError(ValueError):
    """Malformed feeder description."""


class AssumptionError(ValueError):
    """Demands whose impedance products go negative on their path.

    The capacity reduction needs z^R S^R + z^I S^I >= 0 per (demand,
    edge); offending pairs are listed on the exception.
    """

    def __init__(self, pairs: Sequence[tuple[int, int]]):
        super().__init__(
            "negative impedance-power product for (demand, edge): "
            + ", ".join(f"({k}, {e})" for k, e in pairs))
        self.pairs = tuple(pairs)


@dataclass(frozen=True)
class FeederTopology:
    """Path feeder: impedances[i] is edge (i, i+1); customer_node maps
    demand id -> load node in 1..d.  Treat the mapping as immutable."""

    impedances: tuple[complex, ...]
    customer_node: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.impedances:
            raise FeederConfigError("feeder needs at least one edge")
        for i, z in enumerate(self.impedances):
            if z.real < 0.0 or abs(z) == 0.0:
                raise FeederConfigError(f"edge {i}: impedance must have r >= 0 and |z| > 0")
        d = len(self.impedances)
        for k, node in self.customer_node.items():
            if not 1 <= node <= d:
                raise FeederConfigError(f"demand {k}: node {node} outside 1..{d}")

    @property
    def n_edges(self) -> int:
        return len(self.impedances)

    @property
    def n_nodes(self) -> int:
        return len(self.impedances) + 1

    def node_of(self, demand_id: int) -> int:
        try:
            return self.customer_node[demand_id]
        except KeyError:
            raise FeederConfigError(f"demand {demand_id} not placed on the feeder") from None

    def with_customers(self, mapping: Mapping[int, int]) -> "FeederTopology":
        return FeederTopology(impedances=self.impedances, customer_node=dict(mapping))


@dataclass(frozen=True)
class VoltageLimits:
    """Limits in squared-voltage units (volt^2)."""

    v0: float
    v_min: float

    def __post_init__(self):
        if not 0.0 < self.v_min < self.v0:
            raise ValueError("need 0 < v_min < v0")

    @property
    def v_hat(self) -> float:
        """Per-slot voltage-drop budget of the capacity reduction."""
        return (self.v0 - self.v_min) / 2.0


def voltage_coefficient(d: Demand, topo: FeederTopology) -> float:
    """Drop contribution sum_{j < node} (z_j^R S^R + z_j^I S^I)."""
    node = topo.node_of(d.id)
    return sum(z.real * d.power.re + z.imag * d.power.im
               for z in topo.impedances[:node])


def assumption_violations(demands: Sequence[Demand],
                          topo: FeederTopology) -> list[tuple[int, int]]:
    """(demand id, edge index) pairs with negative impedance product on
    the demand's own path."""
    bad = []
    for d in demands:
        node = topo.node_of(d.id)
        for j, z in enumerate(topo.impedances[:node]):
            if z.real * d.power.re + z.imag * d.power.im < 0.0:
                bad.append((d.id, j))
    return bad


def to_cspv_instance(demands: Sequence[Demand], topo: FeederTopology,
                     limits: VoltageLimits, horizon: int,
                     bounds: Optional[SystemBounds] = None) -> Instance:
    """Reduce voltage-limited scheduling to the capacity form.

    Each demand becomes a scalar demand equal to its voltage-drop
    coefficient; every slot's capacity is v_hat.  Raises
    AssumptionError when any impedance product is negative, because the
    deepest-node argument behind the reduction breaks down then.
    """
    bad = assumption_violations(demands, topo)
    if bad:
        raise AssumptionError(bad)
    scalar = [
        Demand(id=d.id, power=ComplexPower(voltage_coefficient(d, topo), 0.0),
               utility=d.utility, t_start=d.t_start, t_end=d.t_end)
        for d in demands
    ]
    if bounds is None:
        bounds = _scalar_bounds(scalar)
    caps = CapacityProfile(np.full(horizon, limits.v_hat))
    return Instance(horizon=horizon, capacities=caps, demands=scalar, bounds=bounds)


def _scalar_bounds(demands: Sequence[Demand]) -> SystemBounds:
    if not demands:
        return SystemBounds(a_min=1.0, a_max=1.0, u_min=1.0, u_max=1.0,
                            T_max=1, theta=0.0)
    ratios = [d.magnitude / d.utility for d in demands if d.magnitude > 0.0]
    if not ratios:
        ratios = [1.0]
    utils = [d.utility for d in demands]
    return SystemBounds(a_min=min(ratios), a_max=max(ratios),
                        u_min=min(utils), u_max=max(utils),
                        T_max=max(d.duration for d in demands), theta=0.0)


@dataclass(frozen=True)
class BfmSolution:
    """Fixed point of the sweep.  v has n_nodes entries, ell and flows
    one per edge (flows at the sending end)."""

    v: np.ndarray
    ell: np.ndarray
    flows: np.ndarray
    iterations: int
    converged: bool


def solve_branch_flow(node_loads: Sequence[complex], topo: FeederTopology,
                      limits: VoltageLimits, tol: float = _SWEEP_TOL,
                      max_iter: int = _SWEEP_MAX_ITER) -> BfmSolution:
    """Backward-forward sweep to the nonlinear fixed point.

    node_loads[i] is the total complex load at node i+1 (VA).  Raises
    VoltageCollapseError when the iteration fails to settle within
    max_iter or any squared voltage goes nonpositive.
    """
    d = topo.n_edges
    if len(node_loads) != d:
        raise FeederConfigError(f"need {d} node loads, got {len(node_loads)}")
    z = np.asarray(topo.impedances, dtype=complex)
    loads = np.asarray(node_loads, dtype=complex)
    v0 = limits.v0

    v = np.full(d + 1, v0)
    ell = np.zeros(d)
    flows = np.zeros(d, dtype=complex)
    for it in range(1, max_iter + 1):
        # Backward: aggregate flows leaf to root with current losses.
        acc = 0.0 + 0.0j
        for i in range(d - 1, -1, -1):
            if i < d - 1:
                acc = flows[i + 1] + z[i + 1] * ell[i + 1]
            else:
                acc = 0.0 + 0.0j
            flows[i] = acc + loads[i]
        # Forward: propagate squared voltages root to leaf.
        v_new = np.empty(d + 1)
        v_new[0] = v0
        for i in range(d):
            v_new[i + 1] = (v_new[i] + abs(z[i]) ** 2 * ell[i]
                            - 2.0 * (z[i].real * flows[i].real + z[i].imag * flows[i].imag))
            if v_new[i + 1] <= 0.0:
                raise VoltageCollapseError(f"squared voltage nonpositive at node {i + 1}")
        ell = np.abs(flows) ** 2 / v_new[:d]
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol * v0:
            return BfmSolution(v=v, ell=ell, flows=flows, iterations=it, converged=True)
    raise VoltageCollapseError(f"sweep did not converge in {max_iter} iterations")


def linear_node_voltages(node_loads: Sequence[complex], topo: FeederTopology,
                         v0: float) -> np.ndarray:
    """Lossless linearized squared voltages."""
    d = topo.n_edges
    z = np.asarray(topo.impedances, dtype=complex)
    loads = np.asarray(node_loads, dtype=complex)
    flows = np.cumsum(loads[::-1])[::-1]  # flow on edge i: loads at nodes > i
    v = np.empty(d + 1)
    v[0] = v0
    for i in range(d):
        v[i + 1] = v[i] - 2.0 * (z[i].real * flows[i].real + z[i].imag * flows[i].imag)
    return v


def _accepted_loads(decision, demands: Sequence[Demand], topo: FeederTopology,
                    slot: Optional[int]) -> np.ndarray:
    loads = np.zeros(topo.n_edges, dtype=complex)
    for d, flag in zip(demands, decision.x):
        if not flag:
            continue
        if slot is not None and not d.active_at(slot):
            continue
        loads[topo.node_of(d.id) - 1] += d.power.as_complex()
    return loads


def bfm_sweep(decision, demands: Sequence[Demand], topo: FeederTopology,
              limits: VoltageLimits, slot: Optional[int] = None) -> BfmSolution:
    """Nonlinear feeder state under a schedule.

    With slot given, only demands active at that slot draw power; with
    slot=None all accepted demands draw simultaneously.
    """
    return solve_branch_flow(_accepted_loads(decision, demands, topo, slot),
                             topo, limits)


@dataclass(frozen=True)
class VoltageReport:
    """Per-node voltage audit of a schedule across the horizon.

    Minima are over slots.  gap_max is the largest relative deviation
    between nonlinear and linearized squared voltages at any node/slot.
    """

    v_min_nonlinear: np.ndarray
    v_min_linear: np.ndarray
    gap_max: float
    nonlinear_ok: bool
    linear_ok: bool
    worst_slot: int
    iterations_max: int


def validate_voltage_solution(decision, demands: Sequence[Demand],
                              topo: FeederTopology, limits: VoltageLimits,
                              horizon: Optional[int] = None) -> VoltageReport:
    """Sweep every slot and compare both models against v_min."""
    if horizon is None:
        horizon = max((d.t_end for d in demands), default=1)
    d_edges = topo.n_edges
    vmin_nl = np.full(d_edges + 1, math.inf)
    vmin_lin = np.full(d_edges + 1, math.inf)
    gap_max = 0.0
    worst_slot = 1
    iters = 0
    worst_v = math.inf
    for t in range(1, horizon + 1):
        loads = _accepted_loads(decision, demands, topo, t)
        sol = solve_branch_flow(loads, topo, limits)
        lin = linear_node_voltages(loads, topo, limits.v0)
        gap = float(np.max(np.abs(sol.v - lin) / limits.v0))
        gap_max = max(gap_max, gap)
        iters = max(iters, sol.iterations)
        vmin_nl = np.minimum(vmin_nl, sol.v)
        vmin_lin = np.minimum(vmin_lin, lin)
        low = float(sol.v.min())
        if low < worst_v:
            worst_v = low
            worst_slot = t
    return VoltageReport(
        v_min_nonlinear=vmin_nl,
        v_min_linear=vmin_lin,
        gap_max=gap_max,
        nonlinear_ok=bool(np.all(vmin_nl >= limits.v_min * (1.0 - 1e-9))),
        linear_ok=bool(np.all(vmin_lin >= limits.v_min * (1.0 - 1e-9))),
        worst_slot=worst_slot,
        iterations_max=iters,
    )


# ---------------------------------------------------------------------------
# Feeder config serialization


def feeder_to_dict(topo: FeederTopology, limits: VoltageLimits,
                   lengths_km: Optional[Sequence[float]] = None) -> dict:
    if lengths_km is None:
        lengths_km = [1.0] * topo.n_edges
    v0_kv = math.sqrt(limits.v0) / 1e3
    v_min_pu = math.sqrt(limits.v_min / limits.v0)
    return {
        "nodes": topo.n_nodes,
        "edges": [
            {"r": z.real / L, "x": z.imag / L, "length_km": L}
            for z, L in zip(topo.impedances, lengths_km)
        ],
        "v0_kv": v0_kv,
        "v_min_pu": v_min_pu,
    }


def feeder_from_dict(data: dict) -> tuple[FeederTopology, VoltageLimits]:
    """Parse `{nodes, edges: [{r, x, length_km}], v0_kv, v_min_pu}`.

    r and x are per km; length_km defaults to 1.
    """
    try:
        edges = data["edges"]
        if data.get("nodes") != len(edges) + 1:
            raise FeederConfigError(
                f"nodes = {data.get('nodes')} inconsistent with {len(edges)} edges")
        zs = []
        for e in edges:
            L = float(e.get("length_km", 1.0))
            if L <= 0.0:
                raise FeederConfigError("length_km must be positive")
            zs.append(complex(float(e["r"]) * L, float(e["x"]) * L))
        topo = FeederTopology(impedances=tuple(zs), customer_node={})
        v0 = (float(data["v0_kv"]) * 1e3) ** 2
        v_min = float(data["v_min_pu"]) ** 2 * v0
        return topo, VoltageLimits(v0=v0, v_min=v_min)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FeederConfigError):
            raise
        raise FeederConfigError(f"bad feeder config: {exc}") from exc


def load_feeder(path) -> tuple[FeederTopology, VoltageLimits]:
    with open(path) as fh:
        return feeder_from_dict(json.load(fh))
