"""Spherical-harmonic multiplicities and the lower/upper index of a sample size.

Degrees are numbered from 0 (the constant harmonic) throughout the package.
"""
from dataclasses import dataclass
import math
from typing import Optional

INT64_MAX = 2**63 - 1
_LOG_INT64_GUARD = 63.0 * math.log(2.0) + 1.0


@dataclass(frozen=True)
class DegreeCount:
    """A count attached to (d, k), exact when it fits in a signed 64-bit int."""

    d: int
    k: int
    value_exact: Optional[int]
    value_log: float

    @property
    def value(self) -> float:
        if self.value_exact is not None:
            return float(self.value_exact)
        return math.exp(self.value_log)


@dataclass(frozen=True)
class IndexSummary:
    d: int
    m: int
    k_m: int
    L_m: int
    U_m: int
    N_next: int  # multiplicity of degree k_m + 1

    @property
    def lower_ratio(self) -> float:
        return self.L_m / self.m

    @property
    def upper_ratio(self) -> float:
        return self.U_m / self.m


def _check_d(d):
    if int(d) != d or d < 2:
        raise ValueError(f"dimension d must be an integer >= 2, got {d!r}")


def _check_k(k):
    if int(k) != k or k < 0:
        raise ValueError(f"degree k must be an integer >= 0, got {k!r}")


def multiplicity_int(d: int, k: int) -> int:
    """N(d, k) as an arbitrary-precision integer."""
    _check_d(d)
    _check_k(k)
    if k == 0:
        return 1
    if d == 2:
        return 2
    # N = (2k+d-2)/(d-2) * C(k+d-3, k); the product is divisible by d-2
    num = (2 * k + d - 2) * math.comb(k + d - 3, k)
    return num // (d - 2)


def log_multiplicity(d: int, k: int) -> float:
    """log N(d, k) through log-gamma; never overflows."""
    _check_d(d)
    _check_k(k)
    if k == 0:
        return 0.0
    if d == 2:
        return math.log(2.0)
    return (
        math.log(2 * k + d - 2)
        + math.lgamma(k + d - 2)
        - math.lgamma(k + 1)
        - math.lgamma(d - 1)
    )


def _small_enough(d, k):
    # cheap guard so huge (d, k) never build giant integers
    return log_multiplicity(d, k) < _LOG_INT64_GUARD


def multiplicity(d: int, k: int) -> DegreeCount:
    if _small_enough(d, k):
        n = multiplicity_int(d, k)
        if n <= INT64_MAX:
            return DegreeCount(d, k, n, math.log(n))
    return DegreeCount(d, k, None, log_multiplicity(d, k))


def cumulative_int(d: int, k: int) -> int:
    """N(d,0) + ... + N(d,k); equals N(d+1, k)."""
    _check_d(d)
    _check_k(k)
    return multiplicity_int(d + 1, k)


def cumulative_multiplicity(d: int, k: int) -> DegreeCount:
    _check_d(d)
    _check_k(k)
    if log_multiplicity(d + 1, k) < _LOG_INT64_GUARD:
        n = cumulative_int(d, k)
        if n <= INT64_MAX:
            return DegreeCount(d, k, n, math.log(n))
    return DegreeCount(d, k, None, log_multiplicity(d + 1, k))


def index_summary(d: int, m: int) -> IndexSummary:
    """k_m is the largest degree whose cumulative count is still below m."""
    _check_d(d)
    if int(m) != m or m < 2:
        raise ValueError(f"sample size m must be an integer >= 2, got {m!r}")
    m = int(m)
    k = 0
    cum = 1
    while True:
        nxt = multiplicity_int(d, k + 1)
        if cum + nxt >= m:
            return IndexSummary(d=d, m=m, k_m=k, L_m=cum, U_m=cum + nxt, N_next=nxt)
        cum += nxt
        k += 1


def invert_index(d: int, j: int) -> int:
    """Degree of the j-th largest eigenvalue (1-based, counted with multiplicity)."""
    _check_d(d)
    if int(j) != j or j < 1:
        raise ValueError(f"flattened index must be an integer >= 1, got {j!r}")
    k = 0
    cum = 1
    while cum < j:
        k += 1
        cum += multiplicity_int(d, k)
    return k


def multiplicity_bounds(d: int, k: int) -> tuple:
    """k^(d-2)/(d-2)! <= N(d,k) <= 2^(d-1) k^(d-2), valid for k >= 1."""
    _check_d(d)
    if k < 1:
        raise ValueError("bounds stated for k >= 1")
    lo = k ** (d - 2) / math.factorial(d - 2)
    hi = 2 ** (d - 1) * k ** (d - 2)
    return lo, hi
