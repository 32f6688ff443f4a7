"""Compare the compiled kernels against the pure-Python fallback.

Times the two hot loops (dual update, rounding/correction scan) on
synthetic streams, then a whole online run with each backend swapped
in.  Outputs one line per case with the speedup.  Run from the repo
root:

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from gridsched import _backend, _kernels_py
from gridsched.online import run_online
from gridsched.workload import GeneratorConfig, gen_instance

try:
    from gridsched import _kernels
except ImportError:
    _kernels = None


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _column_stream(n_cols, m, seed):
    rng = np.random.default_rng(seed)
    caps = rng.uniform(0.5, 5.0, size=m)
    cols = []
    for _ in range(n_cols):
        width = int(rng.integers(1, min(m, 8) + 1))
        idx = np.sort(rng.choice(m, size=width, replace=False)).astype(np.int64)
        a = 10.0 ** rng.uniform(-1.0, 1.0, size=width)
        cols.append((idx, a))
    return caps, cols


def bench_dual_update(impl, n_cols, m, seed):
    caps, cols = _column_stream(n_cols, m, seed)

    def run():
        y = np.zeros(m)
        load = np.zeros(m)
        t_max, a_max, a_min = 0, 0.0, np.inf
        for idx, a in cols:
            t_max = max(t_max, len(idx))
            a_max = max(a_max, a.max())
            a_min = min(a_min, a.min())
            impl.pd_min_increase(y, load, caps, idx, a, t_max * a_max, a_min)

    return _best_of(run, 3) / n_cols


def bench_correction(impl, n, m, seed):
    rng = np.random.default_rng(seed)
    caps = rng.uniform(5.0, 10.0, size=m)
    t0 = rng.integers(0, m, size=n).astype(np.int64)
    t1 = np.minimum(t0 + rng.integers(0, 3, size=n), m - 1).astype(np.int64)
    mag = rng.uniform(0.1, 1.0, size=n)
    phase = rng.uniform(0.0, np.pi / 4, size=n)
    s_re = mag * np.cos(phase)
    s_im = mag * np.sin(phase)
    probs = rng.uniform(0.0, 1.0, size=n)
    draws = rng.uniform(0.0, 1.0, size=n)

    def run():
        x = np.zeros(n, dtype=np.int8)
        corr = np.zeros(n, dtype=np.int8)
        rem = np.zeros(n)
        impl.correction_scan(s_re, s_im, mag, t0, t1, probs, draws, caps,
                             np.zeros(m), np.zeros(m), caps.copy(),
                             False, 1e-9, x, corr, rem)

    return _best_of(run, 3) / n


def bench_online(impl, n, seed):
    inst = gen_instance(GeneratorConfig(n=n, m=8, seed=seed))
    saved = _backend.impl

    def run():
        run_online(inst, seed=seed)

    try:
        _backend.impl = impl
        return _best_of(run, 3)
    finally:
        _backend.impl = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="smaller sizes, for smoke-testing the script")
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    backends = [("python", _kernels_py)]
    if _kernels is not None:
        backends.append(("cython", _kernels))

    scale = 10 if args.quick else 1
    cases = [
        ("dual update, per column",
         lambda impl: bench_dual_update(impl, 2000 // scale, 24, 1)),
        ("correction scan, per demand",
         lambda impl: bench_correction(impl, 20000 // scale, 24, 2)),
        ("full online run, n=2000",
         lambda impl: bench_online(impl, 2000 // scale, 3)),
    ]

    width = max(len(name) for name, _ in cases)
    for name, fn in cases:
        times = {kind: fn(impl) for kind, impl in backends}
        line = f"{name:<{width}}  "
        for kind, t in times.items():
            line += f"{kind}: {t * 1e6:9.2f} us   "
        if len(times) == 2:
            line += f"speedup: {times['python'] / times['cython']:.1f}x"
        print(line)


if __name__ == "__main__":
    main()
