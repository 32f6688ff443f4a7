"""Shared fixtures and small-instance builders for the test suite."""

import math

import pytest

from gridsched import _backend, _kernels_py
from gridsched.core import (
    CapacityProfile,
    ComplexPower,
    Demand,
    Instance,
    SystemBounds,
)

try:
    from gridsched import _kernels as _kernels_c
except ImportError:  # pragma: no cover - build without the extension
    _kernels_c = None

_BACKENDS = [pytest.param(_kernels_py, id="py")]
if _kernels_c is not None:
    _BACKENDS.append(pytest.param(_kernels_c, id="c"))


@pytest.fixture(params=_BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per kernel implementation."""
    monkeypatch.setattr(_backend, "impl", request.param)
    return request.param


def kernel_pair():
    """(pure, compiled) modules; compiled may be None."""
    return _kernels_py, _kernels_c


def mk_demand(i, re, im, u, t0, t1=None):
    if t1 is None:
        t1 = t0
    return Demand(id=i, power=ComplexPower(re, im), utility=u,
                  t_start=t0, t_end=t1)


def bounds_for(demands, theta=None, slack=1.0):
    """Tightest SystemBounds covering the given demands.

    slack > 1 widens every range multiplicatively; theta overrides the
    realized spread (it must still cover it for validation to pass).
    """
    demands = list(demands)
    if not demands:
        return SystemBounds(1.0, 1.0, 1.0, 1.0, 1, 0.0)
    ratios = [d.magnitude / d.utility for d in demands if d.magnitude > 0.0]
    if not ratios:
        ratios = [1.0]
    utils = [d.utility for d in demands]
    if theta is None:
        angles = [d.power.angle for d in demands if d.magnitude > 0.0]
        theta = (max(angles) - min(angles)) if len(angles) > 1 else 0.0
    return SystemBounds(
        a_min=min(ratios) / slack,
        a_max=max(ratios) * slack,
        u_min=min(utils) / slack,
        u_max=max(utils) * slack,
        T_max=max(d.duration for d in demands),
        theta=min(theta, math.pi / 2.0),
    )


def mk_instance(caps, demands, bounds=None, theta=None):
    caps = tuple(caps)
    demands = list(demands)
    if bounds is None:
        bounds = bounds_for(demands, theta=theta)
    return Instance(horizon=len(caps), capacities=CapacityProfile(caps),
                    demands=demands, bounds=bounds)
