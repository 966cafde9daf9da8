"""Gaussian-kernel spectrum on the sphere S^{d-1}.

The kernel exp(-|x-y|^2 / tau^2) has one distinct eigenvalue per harmonic
degree k,

    log lam_k = -T + (d-2) log tau + log I_{k+d/2-1}(T) + log Gamma(d/2),
    T = 2 / tau^2,

shared by the N(d, k) harmonics of that degree. Everything is kept in logs.
"""
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from . import bessel
from .harmonics import log_multiplicity, multiplicity_int

DEFAULT_TAIL_TOL = 1e-10
DEFAULT_MARGIN = 10
MAX_DEGREE = 100_000
# relative slack on the tail bound for rounding in a_K and q_K
_ROUND_SLACK = 1e-12


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectrumSpec:
    d: int
    tau: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension d must be an integer >= 2, got {self.d!r}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"bandwidth tau must be finite and > 0, got {self.tau!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def T(self) -> float:
        return 2.0 / (self.tau * self.tau)

    @property
    def order0(self) -> float:
        return self.d / 2.0 - 1.0


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Distinct eigenvalues with multiplicities, sorted decreasing.

    ``spec`` is None for synthetic spectra. ``tail_bound`` bounds the trace
    mass of everything not listed.
    """

    spec: Optional[SpectrumSpec]
    k: np.ndarray
    log_lambda: np.ndarray
    counts: tuple
    trace_partial: float
    tail_bound: float
    log_tail_bound: Optional[float] = None  # kept when tail_bound underflows
    log_count: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "k", _frozen(self.k, dtype=np.int64))
        object.__setattr__(self, "log_lambda", _frozen(self.log_lambda))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "log_count",
                           _frozen([math.log(c) for c in self.counts]))
        if self.log_tail_bound is None:
            object.__setattr__(self, "log_tail_bound",
                               math.log(self.tail_bound) if self.tail_bound > 0 else -math.inf)
        if not (len(self.k) == len(self.log_lambda) == len(self.counts)):
            raise ValueError("k, log_lambda and counts must have equal length")
        if len(self.k) == 0:
            raise ValueError("empty spectrum")
        if np.any(np.diff(self.log_lambda) >= 0):
            raise ValueError("eigenvalues must be strictly decreasing")
        if min(self.counts) < 1:
            raise ValueError("counts must be >= 1")

    @property
    def d(self):
        return None if self.spec is None else self.spec.d

    @property
    def tau(self):
        return None if self.spec is None else self.spec.tau

    @property
    def n_degrees(self) -> int:
        return len(self.k)

    @property
    def flattened_total(self) -> int:
        return sum(self.counts)

    @property
    def count_array(self) -> np.ndarray:
        # exact below 2**53
        return np.array(self.counts, dtype=float)

    @property
    def lam(self) -> np.ndarray:
        return np.exp(self.log_lambda)

    @property
    def degrees(self):
        return [(int(k), float(l), c) for k, l, c in zip(self.k, self.log_lambda, self.counts)]

    def cumulative(self) -> np.ndarray:
        """Cumulative flattened counts through each listed degree (exact ints)."""
        out = []
        s = 0
        for c in self.counts:
            s += c
            out.append(s)
        return np.array(out, dtype=object)

    def flatten(self) -> np.ndarray:
        """Per-harmonic eigenvalues, for small systems only."""
        if self.flattened_total > 10_000_000:
            raise MemoryError("spectrum too large to flatten")
        return np.repeat(self.lam, self.counts)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "tau": self.tau,
            "degrees": [{"k": k, "log_lambda": ll, "count": c} for k, ll, c in self.degrees],
            "trace_partial": float(self.trace_partial),
            "tail_bound": float(self.tail_bound),
        }


def synthetic_spectrum(lam, counts=None, tail_bound: float = 0.0) -> EigenSystem:
    """EigenSystem from plain (eigenvalue, count) data; equal values are merged."""
    lam = np.asarray(lam, dtype=float).ravel()
    counts = np.ones(lam.shape, dtype=np.int64) if counts is None else np.asarray(counts).ravel()
    if lam.shape != counts.shape:
        raise ValueError("lam and counts must have the same length")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("eigenvalues must be finite and positive")
    merged = {}
    for v, c in zip(lam.tolist(), counts.tolist()):
        if int(c) != c or c < 1:
            raise ValueError("counts must be positive integers")
        merged[v] = merged.get(v, 0) + int(c)
    vals = sorted(merged, reverse=True)
    cnt = [merged[v] for v in vals]
    tr = float(sum(v * c for v, c in zip(vals, cnt)))
    return EigenSystem(None, np.arange(len(vals)), np.log(vals), cnt, tr, float(tail_bound))


def eigenvalue_logs(spec: SpectrumSpec, n: int) -> np.ndarray:
    """log lam_k for k = 0..n-1."""
    base = (spec.d - 2) * math.log(spec.tau) + math.lgamma(spec.d / 2.0)
    return base + bessel.log_ive_chain(spec.order0, n, spec.T)


def eigenvalue_log(spec: SpectrumSpec, k: int) -> float:
    if int(k) != k or k < 0:
        raise ValueError(f"degree must be an integer >= 0, got {k!r}")
    return float(eigenvalue_logs(spec, int(k) + 1)[-1])


def _log_q(spec, k):
    # log of [N(k+1)/N(k)] * T/(2(k+d/2)), an upper bound on a_{k+1}/a_k,
    # nonincreasing in k
    k = np.asarray(k, dtype=float)
    d = spec.d
    if d == 2:
        log_nr = np.where(k == 0, math.log(2.0), 0.0)
    else:
        log_nr = (np.log(2 * k + d) + np.log(k + d - 2)
                  - np.log(2 * k + d - 2) - np.log(k + 1))
    return log_nr + math.log(spec.T) - np.log(2.0 * (k + d / 2.0))


def build_spectrum(spec: SpectrumSpec, m: int, tail_tol: float = DEFAULT_TAIL_TOL,
                   margin: int = DEFAULT_MARGIN, max_degree: int = MAX_DEGREE,
                   log_tail_tol: Optional[float] = None) -> EigenSystem:
    """Truncate the Mercer sum once it covers margin*m modes and the tail is small.

    The tail bound is geometric: once q_K <= 1/2, the omitted mass after
    degree K is at most a_K q_K / (1 - q_K), a_K = N(d,K) lam_K.
    ``log_tail_tol`` overrides ``tail_tol`` for tolerances below float range.
    """
    if int(m) != m or m < 2:
        raise ValueError(f"sample size m must be an integer >= 2, got {m!r}")
    if log_tail_tol is None:
        if not (0 < tail_tol < 1):
            raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol!r}")
        log_tail_tol = math.log(tail_tol)
    elif not log_tail_tol < 0:
        raise ValueError(f"log_tail_tol must be < 0, got {log_tail_tol!r}")
    need = margin * int(m)
    n = 64
    while True:
        n = min(n, max_degree + 1)
        ks = np.arange(n)
        log_lam = eigenvalue_logs(spec, n)
        log_n = np.array([log_multiplicity(spec.d, int(k)) for k in ks])
        log_a = log_lam + log_n
        log_trace = np.logaddexp.accumulate(log_a)
        log_q = _log_q(spec, ks)
        # cumulative count in dimension d is the multiplicity in dimension d+1
        cum_ok = np.array([multiplicity_int(spec.d + 1, int(k)) >= need for k in ks])
        with np.errstate(divide="ignore"):
            log_tail = log_a + log_q - np.log1p(-np.exp(np.minimum(log_q, 0.0)))
        ok = ((log_q <= math.log(0.5)) & cum_ok
              & (log_tail <= log_tail_tol + log_trace))
        hit = np.flatnonzero(ok)
        if hit.size:
            K = int(hit[0])
            break
        if n >= max_degree + 1:
            raise TruncationError(
                f"degree cap {max_degree} reached before truncation criteria held "
                f"(d={spec.d}, tau={spec.tau}, m={m})")
        n *= 2
    counts = [multiplicity_int(spec.d, j) for j in range(K + 1)]
    trace = float(np.exp(logsumexp(log_a[:K + 1])))
    log_tail_K = float(log_tail[K]) + math.log1p(_ROUND_SLACK)
    if np.any(np.diff(log_lam[:K + 1]) >= 0):
        raise bessel.BesselCertificationError("computed eigenvalues are not strictly decreasing")
    return EigenSystem(spec, np.arange(K + 1), log_lam[:K + 1], counts, trace,
                       math.exp(log_tail_K), log_tail_K)


@dataclass(frozen=True)
class RatioCheck:
    k: int
    ratio: float
    lower: float
    upper: float
    ok: bool


@dataclass(frozen=True)
class RatioReport:
    checks: tuple
    max_violation: float  # in log units, 0 when all strict

    @property
    def n_violations(self) -> int:
        return sum(not c.ok for c in self.checks)


def ratio_bracket(spec: SpectrumSpec, k):
    """T/(2(k+d/2)+T) < lam_{k+1}/lam_k < T/((k+d/2-1/2)+T)."""
    k = np.asarray(k, dtype=float)
    T = spec.T
    h = spec.d / 2.0
    return T / (2 * (k + h) + T), T / ((k + h - 0.5) + T)


def check_ratio_bounds(system: EigenSystem) -> RatioReport:
    if system.spec is None:
        raise ValueError("ratio brackets apply to Gaussian spectra only")
    if system.n_degrees < 2:
        return RatioReport((), 0.0)
    ks = system.k[:-1]
    log_r = np.diff(system.log_lambda)
    lo, hi = ratio_bracket(system.spec, ks)
    log_lo, log_hi = np.log(lo), np.log(hi)
    viol = np.maximum(np.maximum(log_lo - log_r, log_r - log_hi), 0.0)
    ok = (log_r > log_lo) & (log_r < log_hi)
    checks = tuple(RatioCheck(int(k), float(np.exp(r)), float(a), float(b), bool(o))
                   for k, r, a, b, o in zip(ks, log_r, lo, hi, ok))
    return RatioReport(checks, float(viol.max()) if (~ok).any() else 0.0)


def first_eigenvalue_bracket(spec: SpectrumSpec) -> tuple:
    """Log-bracket on the top eigenvalue lam_0.

    e^{-T} I_a(T) is bracketed at the anchor order a in {0, 1/2} and each step
    up to order d/2-1 by T/(2(v+1)+T) < I_{v+1}/I_v < T/(2v+1).
    """
    T = spec.T
    d = spec.d
    if d % 2 == 0:
        a = 0.0
        lo = -math.log1p(2 * T)
        hi = -0.5 * math.log1p(2 * T)
    else:
        # exact: e^{-T} I_{1/2}(T) = (1 - e^{-2T}) / sqrt(2 pi T)
        a = 0.5
        lo = hi = math.log(-math.expm1(-2 * T)) - 0.5 * math.log(2 * math.pi * T)
        lo -= 1e-12
        hi += 1e-12
    v = a + np.arange(int(round(spec.order0 - a)))
    lo += float(np.sum(np.log(T) - np.log(2 * (v + 1) + T)))
    hi += float(np.sum(np.log(T) - np.log(2 * v + 1)))
    base = (d - 2) * math.log(spec.tau) + math.lgamma(d / 2.0)
    return base + lo, base + hi


def first_eigenvalue_bracket_printed(spec: SpectrumSpec) -> tuple:
    """The closed-form bracket exactly as published; kept for diagnosis."""
    tau, T, d = spec.tau, spec.T, spec.d
    g = gammaln(T + 0.5) + math.lgamma(d / 2.0)
    lo = -math.log(tau**2 + 4) + g - gammaln(T + d / 2.0 + 2)
    hi = -0.5 * math.log(tau**4 + 4 * tau**2) + g - gammaln(T + d / 2.0 + 1.5)
    return float(lo), float(hi)
