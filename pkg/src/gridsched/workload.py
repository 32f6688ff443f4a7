"""Synthetic workload generation.

Produces random instances shaped like a microgrid feeder serving a mix
of commercial and residential customers: per-slot capacity flips
between a base and a reduced level by independent Bernoulli draws,
demand magnitudes are uniform up to the customer-type cap, phases are
uniform within the configured spread, and utilities are either a
quadratic function of magnitude or independent uniforms.  Everything is
a pure function of (config, config.seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .core import CapacityProfile, ComplexPower, Demand, Instance, SystemBounds
from .voltage import CANADIAN_Z_PER_KM, FeederTopology, VoltageLimits

MVA = 1e6
KVA = 1e3

UTILITY_MODES = ("quadratic", "random")


class ConfigError(ValueError):
    """Inconsistent generator configuration."""


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for random instance generation.

    base_capacity is the high per-slot capacity (VA); each slot drops
    to low_capacity with probability 1 - bernoulli_p.  commercial_share
    is the probability a customer is commercial (cap commercial_cap VA)
    rather than residential (cap residential_cap VA).  theta_deg bounds
    the phase spread.  Quadratic utilities are
    quad_a |S|^2 + quad_b |S| + quad_c.
    """

    n: int
    m: int
    seed: int = 0
    base_capacity: float = 4.0 * MVA
    bernoulli_p: float = 0.8
    low_capacity: float = 2.0 * MVA
    max_duration: int = 3
    utility: str = "quadratic"
    quad_a: float = 1e-12
    quad_b: float = 0.0
    quad_c: float = 0.0
    commercial_share: float = 0.5
    commercial_cap: float = 1.0 * MVA
    residential_cap: float = 20.0 * KVA
    theta_deg: float = 36.0

    def __post_init__(self):
        if self.n < 0 or self.m < 1:
            raise ConfigError("need n >= 0 and m >= 1")
        if not 0.0 < self.bernoulli_p <= 1.0:
            raise ConfigError("bernoulli_p must lie in (0, 1]")
        if not 0.0 <= self.commercial_share <= 1.0:
            raise ConfigError("commercial_share must lie in [0, 1]")
        if self.base_capacity <= 0.0 or self.low_capacity <= 0.0:
            raise ConfigError("capacities must be positive")
        if self.low_capacity > self.base_capacity:
            raise ConfigError("low_capacity above base_capacity")
        if not 1 <= self.max_duration <= self.m:
            raise ConfigError("max_duration must lie in [1, m]")
        if self.utility not in UTILITY_MODES:
            raise ConfigError(f"utility must be one of {UTILITY_MODES}")
        if not 0.0 <= self.theta_deg <= 90.0:
            raise ConfigError("theta_deg must lie in [0, 90]")
        if self.commercial_cap <= 0.0 or self.residential_cap <= 0.0:
            raise ConfigError("customer caps must be positive")
        # Demands larger than the lowest capacity would break the
        # no-bottleneck assumption by construction.
        if self.demand_cap() > self.low_capacity:
            raise ConfigError("customer cap exceeds low_capacity (NBA violated)")
        if self.utility == "quadratic":
            if self.quad_a < 0.0 or self.quad_b < 0.0 or self.quad_c < 0.0:
                raise ConfigError("quadratic coefficients must be non-negative")
            if self.quad_a == 0.0 and self.quad_b == 0.0 and self.quad_c == 0.0:
                raise ConfigError("quadratic utility would be identically zero")

    def demand_cap(self) -> float:
        caps = []
        if self.commercial_share > 0.0:
            caps.append(self.commercial_cap)
        if self.commercial_share < 1.0:
            caps.append(self.residential_cap)
        return max(caps)

    @property
    def theta(self) -> float:
        return math.radians(self.theta_deg)


def _rng(cfg: GeneratorConfig, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((cfg.seed, stream))))


def gen_capacity(cfg: GeneratorConfig) -> CapacityProfile:
    """Per-slot capacities: base with probability bernoulli_p, else low."""
    rng = _rng(cfg, 0)
    high = rng.random(cfg.m) < cfg.bernoulli_p
    return CapacityProfile(np.where(high, cfg.base_capacity, cfg.low_capacity))


def _utilities(cfg: GeneratorConfig, mags: np.ndarray, caps: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    if cfg.utility == "quadratic":
        u = cfg.quad_a * mags**2 + cfg.quad_b * mags + cfg.quad_c
        if np.any(u <= 0.0):
            raise ConfigError("quadratic utility hit zero for some demand")
        return u
    # Independent of the demand size, uniform up to the type cap.
    return (1.0 - rng.random(len(mags))) * caps


def gen_customers(cfg: GeneratorConfig) -> list[Demand]:
    """Customer demands sorted by interval start, ids re-assigned 1..n.

    Start slots are uniform over the horizon, durations uniform up to
    max_duration (truncated at the horizon), magnitudes uniform in
    (0, cap] for the drawn customer type, phases uniform in [0, theta].
    Sorting by start makes the arrival order match interval starts,
    which the rounding analysis for large demands relies on.
    """
    rng = _rng(cfg, 1)
    n = cfg.n
    starts = rng.integers(1, cfg.m + 1, size=n)
    durs = rng.integers(1, cfg.max_duration + 1, size=n)
    commercial = rng.random(n) < cfg.commercial_share
    caps = np.where(commercial, cfg.commercial_cap, cfg.residential_cap)
    mags = (1.0 - rng.random(n)) * caps
    phases = rng.random(n) * cfg.theta
    utils = _utilities(cfg, mags, caps, rng)

    order = np.argsort(starts, kind="stable")
    demands = []
    for new_id, i in enumerate(order, start=1):
        t_start = int(starts[i])
        t_end = min(t_start + int(durs[i]) - 1, cfg.m)
        demands.append(Demand(
            id=new_id,
            power=ComplexPower(mags[i] * math.cos(phases[i]),
                               mags[i] * math.sin(phases[i])),
            utility=float(utils[i]),
            t_start=t_start,
            t_end=t_end,
        ))
    return demands


def realized_bounds(cfg: GeneratorConfig, demands: list[Demand]) -> SystemBounds:
    """Tight bounds computed from the generated demands.

    theta stays at the configured spread (the generator never exceeds
    it); the other fields are realized extremes.  An empty workload
    gets placeholder unit bounds.
    """
    if not demands:
        return SystemBounds(a_min=1.0, a_max=1.0, u_min=1.0, u_max=1.0,
                            T_max=1, theta=cfg.theta)
    ratios = [d.magnitude / d.utility for d in demands if d.magnitude > 0.0]
    if not ratios:
        ratios = [1.0]
    utils = [d.utility for d in demands]
    return SystemBounds(
        a_min=min(ratios), a_max=max(ratios),
        u_min=min(utils), u_max=max(utils),
        T_max=max(d.duration for d in demands),
        theta=cfg.theta)


def gen_instance(cfg: GeneratorConfig) -> Instance:
    """Full random instance: capacities, sorted demands, realized bounds."""
    capacities = gen_capacity(cfg)
    demands = gen_customers(cfg)
    bounds = realized_bounds(cfg, demands)
    return Instance(horizon=cfg.m, capacities=capacities, demands=demands,
                    bounds=bounds)


# ---------------------------------------------------------------------------
# Feeder-shaped workloads


def canonical_feeder(n_sections: int = 4, section_km: float = 1.0,
                     v0_kv: float = 12.47, v_min_pu: float = 0.917):
    """Reference radial feeder: n_sections identical cable sections.

    Cable impedance is 0.1529 + j0.1406 ohm/km; the default section
    length and the minimum-voltage setting are operating assumptions,
    both overridable.  Returns (topology, limits).
    """
    z = CANADIAN_Z_PER_KM * section_km
    topo = FeederTopology(impedances=(z,) * n_sections, customer_node={})
    v0 = (v0_kv * 1e3) ** 2
    limits = VoltageLimits(v0=v0, v_min=(v_min_pu ** 2) * v0)
    return topo, limits


def place_customers(demands: list[Demand], topo: FeederTopology,
                    seed: int) -> FeederTopology:
    """Attach each demand to a uniformly random load node."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 2))))
    d = topo.n_edges
    nodes = rng.integers(1, d + 1, size=len(demands))
    mapping = {dem.id: int(node) for dem, node in zip(demands, nodes)}
    return topo.with_customers(mapping)


# ---------------------------------------------------------------------------
# Config serialization


def config_to_dict(cfg: GeneratorConfig) -> dict:
    return asdict(cfg)


def config_from_dict(data: dict) -> GeneratorConfig:
    try:
        return GeneratorConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"bad generator config: {exc}") from exc


def load_config(path) -> GeneratorConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg: GeneratorConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
