"""Pure-Python fallback for the hot kernels.

Mirrors ``gridsched._kernels`` (the compiled extension) and is selected by
``gridsched._backend`` when the extension is missing or GRIDSCHED_PURE=1.
Both implementations stick to scalar libm calls (exp, log, hypot) so they
produce bit-identical results on the same platform.
"""

import math

KERNEL_KIND = "python"

# Covering constraint is considered satisfied within this slack.
STOP_TOL = 1e-9
# Absolute tolerance of the bisection on the fractional increase.
X_TOL = 1e-12
_MAX_ITER = 200


def pd_min_increase(y, load, caps, idx, a, denom, a_min_pos):
    """Smallest x >= 0 that lifts the new column's coverage to 1.

    y, load, caps are per-slot arrays; idx/a give the column's active
    slots and coefficients.  denom is the running T_max * a_max product
    and a_min_pos the running minimum over positive coefficients.  On
    return, load[idx] has gained a*x and y[idx] has received the
    exponential update.  Returns x.
    """
    k = len(idx)
    y0 = [float(y[idx[i]]) for i in range(k)]
    c2 = [2.0 * float(caps[idx[i]]) for i in range(k)]
    l0 = [float(load[idx[i]]) for i in range(k)]
    av = [float(a[i]) for i in range(k)]

    def cover(x):
        s = 0.0
        for i in range(k):
            ai = av[i]
            if ai == 0.0:
                continue
            cand = (math.exp((l0[i] + ai * x) / c2[i]) - 1.0) / denom
            s += ai * (y0[i] if y0[i] > cand else cand)
        return s

    if cover(0.0) >= 1.0 - STOP_TOL:
        x = 0.0
    else:
        # One term alone reaches 1 at this x, so cover(hi) >= 1.
        log_cap = math.log(1.0 + denom / a_min_pos)
        hi = math.inf
        for i in range(k):
            if av[i] > 0.0:
                cand = c2[i] * log_cap / av[i]
                if cand < hi:
                    hi = cand
        guard = 0
        while cover(hi) < 1.0:
            hi *= 2.0
            guard += 1
            if guard > _MAX_ITER:
                raise ArithmeticError("covering target unreachable")
        lo = 0.0
        for _ in range(_MAX_ITER):
            if hi - lo <= X_TOL:
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if cover(mid) >= 1.0:
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
        cand = (math.exp(load[t] / c2[i]) - 1.0) / denom
        if cand > y[t]:
            y[t] = cand
    return x


def correction_scan(s_re, s_im, mag, t0, t1, probs, draws, caps,
                    agg_re, agg_im, cprime, strict, eps,
                    x_out, corr_out, rem_out):
    """Sequential rounding-plus-correction pass over a demand stream.

    Demand k is tentatively accepted when draws[k] < probs[k] and kept
    only if the correction test passes on every slot of its interval:
    |aggregate + S_k| <= caps (exact mode) or <= cprime (strict mode,
    which then debits |S_k| from cprime).  agg_re/agg_im/cprime are
    mutated in place.  rem_out[k] records the tightest headroom over
    the interval after the decision.
    """
    n = len(mag)
    for k in range(n):
        lo = t0[k]
        hi = t1[k]
        if draws[k] < probs[k]:
            ok = True
            for t in range(lo, hi + 1):
                re = agg_re[t] + s_re[k]
                im = agg_im[t] + s_im[k]
                # sqrt of squares, not hypot: keeps both backends
                # bit-identical (fine at VA scales, no overflow).
                total = math.sqrt(re * re + im * im)
                limit = cprime[t] if strict else caps[t]
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
        rem = math.inf
        for t in range(lo, hi + 1):
            if strict:
                head = cprime[t]
            else:
                head = caps[t] - math.sqrt(agg_re[t] * agg_re[t] + agg_im[t] * agg_im[t])
            if head < rem:
                rem = head
        rem_out[k] = rem
