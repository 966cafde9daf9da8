"""Hot numeric loops.

Each kernel exists in two flavours: a loop body compiled by numba, and a
pure numpy/python path. ``KRR_OVERFIT_DISABLE_NUMBA=1`` selects the second at
import time. The public names at the bottom of the module are bound to the
active flavour; the benchmark imports both explicitly.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, jit

TINY = 1e-300
EPS = 2.220446049250313e-16


# ---------------------------------------------------------------- Bessel ratios
def _cf_ratio_loop(v, x, max_iter):
    # modified Lentz on I_{v+1}/I_v = 1/(b1 + 1/(b2 + ...)),  b_j = 2(v+j)/x
    f = TINY
    c = f
    dd = 0.0
    for j in range(1, max_iter + 1):
        b = 2.0 * (v + j) / x
        dd = b + dd
        if dd == 0.0:
            dd = TINY
        c = b + 1.0 / c
        if c == 0.0:
            c = TINY
        dd = 1.0 / dd
        delta = c * dd
        f *= delta
        if abs(delta - 1.0) < EPS:
            return f, j
    return f, -1


def _make_ratio_chain(cf):
    def ratio_chain(v_lo, n, x, max_iter):
        # r_i = I_{v_lo+i+1}/I_{v_lo+i}; CF at the top, stable downward recurrence
        out = np.empty(n)
        r, it = cf(v_lo + n - 1, x, max_iter)
        if it < 0:
            out[:] = np.nan
            return out
        out[n - 1] = r
        for i in range(n - 2, -1, -1):
            u = v_lo + i + 1
            r = 1.0 / (2.0 * u / x + r)
            out[i] = r
        return out

    return ratio_chain


# ------------------------------------------------------------- series oracle
def _log_i_series_loop(v, x):
    # log I_v(x) from the defining power series, online log-sum-exp
    h = math.log(0.5 * x)
    lt = v * h - math.lgamma(v + 1.0)
    mx = lt
    s = 1.0
    j = 0
    while True:
        lt += 2.0 * h - math.log(j + 1.0) - math.log(v + j + 1.0)
        j += 1
        if lt > mx:
            s = s * math.exp(mx - lt) + 1.0
            mx = lt
        else:
            s += math.exp(lt - mx)
            # terms decrease monotonically past the peak
            if lt < mx - 40.0 and (j + 1.0) * (v + j + 1.0) > 0.25 * x * x:
                break
    return mx + math.log(s)


def _log_i_series_np(v, x):
    h = np.log(0.5 * x)
    peak = 0.5 * (-(v + 2.0) + math.sqrt(v * v + x * x)) if x > 0 else 0.0
    n_terms = int(max(peak, 0.0) + 8.0 * math.sqrt(max(peak, 1.0)) + 64)
    while True:
        j = np.arange(n_terms, dtype=float)
        incr = 2.0 * h - np.log(j[1:]) - np.log(v + j[1:])
        lt = np.concatenate(([v * h - math.lgamma(v + 1.0)], incr))
        lt = np.cumsum(lt)
        if lt[-1] < lt.max() - 40.0:
            break
        n_terms *= 2
    mx = lt.max()
    return float(mx + np.log(np.sum(np.exp(lt - mx))))


# ------------------------------------------------------------ kappa bisection
def _kappa_excess_loop(log_lam, log_cnt, cnt, m, delta, log_kappa):
    # terms with L >= 1/2 enter as N - N(1 - L); the integer parts cancel m exactly,
    # so the rounding error scales with sum N min(L, 1 - L), the slope in log kappa
    whole = 0.0
    s = 0.0
    for i in range(log_lam.shape[0]):
        z = log_kappa - log_lam[i]
        if z < 0.0:
            whole += cnt[i]
            s -= math.exp(log_cnt[i] + z - math.log1p(math.exp(z)))
        else:
            s += math.exp(log_cnt[i] - z - math.log1p(math.exp(-z)))
    if delta > 0.0:
        s += delta * math.exp(-log_kappa)
    return (whole - m) + s


def _kappa_excess_np(log_lam, log_cnt, cnt, m, delta, log_kappa):
    z = log_kappa - log_lam
    big = z < 0.0
    log_part = np.where(big, z, 0.0) - np.logaddexp(0.0, z)
    part = np.exp(log_cnt + log_part)
    s = float(np.sum(part[~big]) - np.sum(part[big]))
    if delta > 0.0:
        s += delta * math.exp(-log_kappa)
    return (float(np.sum(cnt[big])) - m) + s


def _make_bisect(excess):
    def bisect(log_lam, log_cnt, cnt, m, delta, lo, hi, tol):
        # excess is strictly decreasing in log kappa; lo/hi already bracket
        n = 0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if excess(log_lam, log_cnt, cnt, m, delta, mid) > 0.0:
                lo = mid
            else:
                hi = mid
            n += 1
        return 0.5 * (lo + hi), n

    return bisect


cf_ratio_py = _cf_ratio_loop
ratio_chain_py = _make_ratio_chain(_cf_ratio_loop)
log_i_series_np = _log_i_series_np
kappa_excess_np = _kappa_excess_np
kappa_bisect_np = _make_bisect(_kappa_excess_np)

if HAVE_NUMBA:
    cf_ratio_nb = jit(_cf_ratio_loop)
    ratio_chain_nb = jit(_make_ratio_chain(cf_ratio_nb))
    log_i_series_nb = jit(_log_i_series_loop)
    kappa_excess_nb = jit(_kappa_excess_loop)
    kappa_bisect_nb = jit(_make_bisect(kappa_excess_nb))

    cf_ratio = cf_ratio_nb
    ratio_chain = ratio_chain_nb
    log_i_series = log_i_series_nb
    kappa_excess = kappa_excess_nb
    kappa_bisect = kappa_bisect_nb
else:
    cf_ratio = cf_ratio_py
    ratio_chain = ratio_chain_py
    log_i_series = log_i_series_np
    kappa_excess = kappa_excess_np
    kappa_bisect = kappa_bisect_np
