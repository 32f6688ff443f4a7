# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fractional packing updates and rounding scans.

Keep in lockstep with gridsched._kernels_py, the pure-Python fallback.
Scalar libm calls only, so both backends agree bit for bit.
"""

from libc.math cimport exp, log, sqrt, INFINITY
from libc.stdlib cimport malloc, free

KERNEL_KIND = "cython"

cdef double STOP_TOL = 1e-9
cdef double X_TOL = 1e-12
cdef int _MAX_ITER = 200


cdef double _cover(double x, int k, double* y0, double* c2, double* l0,
                   double* av, double denom) nogil:
    cdef double s = 0.0
    cdef double cand, ai
    cdef int i
    for i in range(k):
        ai = av[i]
        if ai == 0.0:
            continue
        cand = (exp((l0[i] + ai * x) / c2[i]) - 1.0) / denom
        if y0[i] > cand:
            s += ai * y0[i]
        else:
            s += ai * cand
    return s


def pd_min_increase(double[::1] y, double[::1] load, const double[::1] caps,
                    const long long[::1] idx, const double[::1] a,
                    double denom, double a_min_pos):
    """See gridsched._kernels_py.pd_min_increase."""
    cdef int k = idx.shape[0]
    cdef double* y0 = <double*> malloc(4 * k * sizeof(double))
    if y0 == NULL:
        raise MemoryError()
    cdef double* c2 = y0 + k
    cdef double* l0 = y0 + 2 * k
    cdef double* av = y0 + 3 * k
    cdef int i, guard
    cdef long long t
    cdef double x, hi, lo, mid, cand, log_cap
    try:
        for i in range(k):
            t = idx[i]
            y0[i] = y[t]
            c2[i] = 2.0 * caps[t]
            l0[i] = load[t]
            av[i] = a[i]

        if _cover(0.0, k, y0, c2, l0, av, denom) >= 1.0 - STOP_TOL:
            x = 0.0
        else:
            log_cap = log(1.0 + denom / a_min_pos)
            hi = INFINITY
            for i in range(k):
                if av[i] > 0.0:
                    cand = c2[i] * log_cap / av[i]
                    if cand < hi:
                        hi = cand
            guard = 0
            while _cover(hi, k, y0, c2, l0, av, denom) < 1.0:
                hi *= 2.0
                guard += 1
                if guard > _MAX_ITER:
                    raise ArithmeticError("covering target unreachable")
            lo = 0.0
            for i in range(_MAX_ITER):
                if hi - lo <= X_TOL:
                    break
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if _cover(mid, k, y0, c2, l0, av, denom) >= 1.0:
                    hi = mid
                else:
                    lo = mid
            x = hi

        if x > 0.0:
            for i in range(k):
                t = idx[i]
                load[t] = l0[i] + av[i] * x
        for i in range(k):
            t = idx[i]
            cand = (exp(load[t] / c2[i]) - 1.0) / denom
            if cand > y[t]:
                y[t] = cand
        return x
    finally:
        free(y0)


def correction_scan(const double[::1] s_re, const double[::1] s_im,
                    const double[::1] mag,
                    const long long[::1] t0, const long long[::1] t1,
                    const double[::1] probs, const double[::1] draws,
                    const double[::1] caps,
                    double[::1] agg_re, double[::1] agg_im, double[::1] cprime,
                    bint strict, double eps,
                    signed char[::1] x_out, signed char[::1] corr_out,
                    double[::1] rem_out):
    """See gridsched._kernels_py.correction_scan."""
    cdef int n = mag.shape[0]
    cdef int k
    cdef long long lo, hi, t
    cdef bint ok
    cdef double total, limit, rem, head, re, im
    for k in range(n):
        lo = t0[k]
        hi = t1[k]
        if draws[k] < probs[k]:
            ok = True
            for t in range(lo, hi + 1):
                re = agg_re[t] + s_re[k]
                im = agg_im[t] + s_im[k]
                total = sqrt(re * re + im * im)
                if strict:
                    limit = cprime[t]
                else:
                    limit = caps[t]
                if total > limit * (1.0 + eps):
                    ok = False
                    break
            if ok:
                for t in range(lo, hi + 1):
                    agg_re[t] += s_re[k]
                    agg_im[t] += s_im[k]
                    if strict:
                        cprime[t] -= mag[k]
                x_out[k] = 1
            else:
                x_out[k] = 0
                corr_out[k] = 1
        else:
            x_out[k] = 0
        rem = INFINITY
        for t in range(lo, hi + 1):
            if strict:
                head = cprime[t]
            else:
                head = caps[t] - sqrt(agg_re[t] * agg_re[t] + agg_im[t] * agg_im[t])
            if head < rem:
                rem = head
        rem_out[k] = rem
