"""Compiled and pure kernels must agree bit for bit."""

import os
import subprocess
import sys

import numpy as np
import pytest

from gridsched import _backend

from conftest import kernel_pair

PURE, COMPILED = kernel_pair()

needs_compiled = pytest.mark.skipif(COMPILED is None,
                                    reason="compiled extension not built")


def _pd_inputs(rng, m):
    y = rng.uniform(0.0, 0.4, size=m)
    load = rng.uniform(0.0, 2.0, size=m)
    caps = rng.uniform(0.5, 4.0, size=m)
    width = int(rng.integers(1, m + 1))
    idx = rng.choice(m, size=width, replace=False).astype(np.int64)
    a = rng.uniform(0.0, 3.0, size=width)
    if not np.any(a > 0):
        a[0] = 1.0
    a_min_pos = float(a[a > 0].min())
    denom = float(max(width, 1) * a.max())
    return y, load, caps, idx, a, denom, a_min_pos


@needs_compiled
class TestPdKernelEquivalence:
    def test_bitwise_equal(self):
        rng = np.random.default_rng(101)
        for trial in range(300):
            m = int(rng.integers(1, 8))
            y, load, caps, idx, a, denom, a_min_pos = _pd_inputs(rng, m)
            y1, l1 = y.copy(), load.copy()
            y2, l2 = y.copy(), load.copy()
            x1 = PURE.pd_min_increase(y1, l1, caps, idx, a, denom, a_min_pos)
            x2 = COMPILED.pd_min_increase(y2, l2, caps, idx, a, denom, a_min_pos)
            assert x1 == x2, trial
            np.testing.assert_array_equal(y1, y2, err_msg=str(trial))
            np.testing.assert_array_equal(l1, l2, err_msg=str(trial))

    def test_accepts_read_only_caps(self):
        caps = np.array([1.0, 1.0])
        caps.setflags(write=False)
        y = np.zeros(2)
        load = np.zeros(2)
        idx = np.array([0, 1], dtype=np.int64)
        a = np.array([1.0, 1.0])
        x = COMPILED.pd_min_increase(y, load, caps, idx, a, 2.0, 1.0)
        assert x > 0


def _scan_inputs(rng, n, m):
    mag = rng.uniform(0.1, 2.0, size=n)
    phase = rng.uniform(0.0, np.pi / 2, size=n)
    s_re = mag * np.cos(phase)
    s_im = mag * np.sin(phase)
    t0 = rng.integers(0, m, size=n).astype(np.int64)
    t1 = np.minimum(t0 + rng.integers(0, 3, size=n), m - 1).astype(np.int64)
    probs = rng.uniform(0.0, 1.0, size=n)
    draws = rng.uniform(0.0, 1.0, size=n)
    caps = rng.uniform(1.0, 5.0, size=m)
    return s_re, s_im, mag, t0, t1, probs, draws, caps


@needs_compiled
class TestScanKernelEquivalence:
    @pytest.mark.parametrize("strict", [False, True])
    def test_bitwise_equal(self, strict):
        rng = np.random.default_rng(211)
        for trial in range(300):
            n = int(rng.integers(1, 30))
            m = int(rng.integers(1, 6))
            s_re, s_im, mag, t0, t1, probs, draws, caps = _scan_inputs(rng, n, m)
            outs = []
            for mod in (PURE, COMPILED):
                agg_re = np.zeros(m)
                agg_im = np.zeros(m)
                cprime = caps.copy()
                x = np.zeros(n, dtype=np.int8)
                corr = np.zeros(n, dtype=np.int8)
                rem = np.zeros(n)
                mod.correction_scan(s_re, s_im, mag, t0, t1, probs, draws,
                                    caps, agg_re, agg_im, cprime, strict,
                                    1e-9, x, corr, rem)
                outs.append((x, corr, rem, agg_re, agg_im, cprime))
            for a, b in zip(outs[0], outs[1]):
                np.testing.assert_array_equal(a, b, err_msg=str(trial))


class TestSelection:
    def test_kind_reports_active_module(self):
        assert _backend.kernel_kind() == _backend.impl.KERNEL_KIND
        assert _backend.kernel_kind() in ("cython", "python")

    def test_pure_module_kind(self):
        assert PURE.KERNEL_KIND == "python"

    @needs_compiled
    def test_compiled_module_kind(self):
        assert COMPILED.KERNEL_KIND == "cython"

    def test_env_forces_pure(self):
        env = dict(os.environ, GRIDSCHED_PURE="1")
        out = subprocess.run(
            [sys.executable, "-c",
             "from gridsched import _backend; print(_backend.kernel_kind())"],
            capture_output=True, text=True, env=env, check=True)
        assert out.stdout.strip() == "python"

    @needs_compiled
    def test_default_prefers_compiled(self):
        env = {k: v for k, v in os.environ.items() if k != "GRIDSCHED_PURE"}
        out = subprocess.run(
            [sys.executable, "-c",
             "from gridsched import _backend; print(_backend.kernel_kind())"],
            capture_output=True, text=True, env=env, check=True)
        assert out.stdout.strip() == "cython"
