"""Log-domain modified Bessel functions of the first kind.

Fast path: ratios I_{v+1}/I_v from a continued fraction at the top order and
downward recurrence, anchored at the fractional order with scipy's scaled
``ive``. Oracle: the defining power series summed in log-sum-exp form.
"""
import math

import numpy as np
from scipy import special

from . import _kernels

CF_MAX_ITER = 1_000_000


class BesselDomainError(ValueError):
    pass


class BesselCertificationError(ArithmeticError):
    """A computed ratio fell outside its analytic bracket."""


def _check(v, x):
    if not (np.isfinite(v) and v >= 0):
        raise BesselDomainError(f"order must be finite and >= 0, got {v!r}")
    if not (np.isfinite(x) and x > 0):
        raise BesselDomainError(f"argument must be finite and > 0, got {x!r}")


def segura_bracket(v, x):
    """Strict lower/upper bounds on I_{v+1}(x)/I_v(x) for v >= 0, x > 0."""
    v = np.asarray(v, dtype=float)
    a = v + 1.0
    b = v + 0.5
    lo = x / (a + np.sqrt(a * a + x * x))
    hi = x / (b + np.sqrt(b * b + x * x))
    return lo, hi


def log_bessel_i_series(v: float, x: float) -> float:
    """Oracle: log I_v(x) from the power series."""
    _check(v, x)
    return float(_kernels.log_i_series(float(v), float(x)))


def ratio_chain(v_lo: float, n: int, x: float, certify: bool = True) -> np.ndarray:
    """r[i] = I_{v_lo+i+1}(x) / I_{v_lo+i}(x) for i = 0..n-1."""
    _check(v_lo, x)
    if n <= 0:
        return np.empty(0)
    r = _kernels.ratio_chain(float(v_lo), int(n), float(x), CF_MAX_ITER)
    if not np.all(np.isfinite(r)):
        raise BesselCertificationError(
            f"continued fraction did not converge at order {v_lo + n - 1}, x={x}")
    if certify:
        lo, hi = segura_bracket(v_lo + np.arange(n), x)
        # one ulp of slack for rounding at the bracket edges
        bad = (r < lo * (1 - 4e-16)) | (r > hi * (1 + 4e-16))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise BesselCertificationError(
                f"ratio at order {v_lo + i} outside bracket: {r[i]} not in ({lo[i]}, {hi[i]})")
    return r


def bessel_ratio(v: float, x: float) -> float:
    """I_{v+1}(x)/I_v(x)."""
    return float(ratio_chain(v, 1, x)[0])


def _log_ive_anchor(v, x):
    val = special.ive(v, x)
    if val > 0 and np.isfinite(val):
        return math.log(val)
    return log_bessel_i_series(v, x) - x


def log_ive_chain(v0: float, n: int, x: float) -> np.ndarray:
    """log(I_{v0+i}(x) e^{-x}) for i = 0..n-1."""
    _check(v0, x)
    if n < 1:
        raise ValueError("n must be >= 1")
    base = math.floor(v0)
    frac = v0 - base
    out = np.empty(n)
    anchor = _log_ive_anchor(frac, x)
    steps = base + n - 1
    if steps == 0:
        out[0] = anchor
        return out
    logs = anchor + np.concatenate(([0.0], np.cumsum(np.log(ratio_chain(frac, steps, x)))))
    return logs[base:]


def log_bessel_i(v: float, x: float) -> float:
    """log I_v(x) for v >= 0, x > 0."""
    return float(log_ive_chain(v, 1, x)[0] + x)
