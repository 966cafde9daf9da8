"""Closed-form risk prediction for kernel ridge(less) regression.

With flattened eigenvalues lam_i and m samples, kappa solves

    sum_i lam_i / (lam_i + kappa) + delta / kappa = m,

the learnabilities are L_i = lam_i / (lam_i + kappa), the overfitting
coefficient is E = m / (m - sum_i L_i^2), and the predicted test risk is
E * (sum_i (1 - L_i)^2 beta_i^2 + sigma^2). All sums run over degree blocks,
weighted by multiplicity.
"""
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from scipy import optimize

from . import _kernels
from .spectrum import (DEFAULT_TAIL_TOL, EigenSystem, SpectrumSpec, build_spectrum,
                       synthetic_spectrum)

KAPPA_TAIL_TOL = 1e-11  # omitted-tail contribution allowed in the kappa sum, relative to m


class SolverError(ArithmeticError):
    pass


class InsufficientRankError(SolverError):
    pass


def as_system(obj) -> EigenSystem:
    """Accept an EigenSystem, a list of (lam, count) pairs or a 1-d array of eigenvalues."""
    if isinstance(obj, EigenSystem):
        return obj
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return synthetic_spectrum(arr[:, 0], arr[:, 1].astype(np.int64))
    if arr.ndim == 1:
        return synthetic_spectrum(arr)
    raise TypeError("expected an EigenSystem, (lam, count) pairs or a 1-d eigenvalue array")


# ------------------------------------------------------------------- target
@dataclass(frozen=True)
class TargetSpec:
    """Per-degree squared coefficient mass; ``B`` bounds any single harmonic coefficient."""

    mass: dict = field(default_factory=dict)
    B: Optional[float] = None

    def __post_init__(self):
        clean = {}
        for k, v in dict(self.mass).items():
            if int(k) != k or k < 0:
                raise ValueError(f"degree must be an integer >= 0, got {k!r}")
            v = float(v)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"squared mass must be finite and >= 0, got {v!r}")
            if v > 0:
                clean[int(k)] = v
        object.__setattr__(self, "mass", dict(sorted(clean.items())))
        if self.B is not None:
            if not (np.isfinite(self.B) and self.B >= 0):
                raise ValueError("B must be finite and >= 0")
            object.__setattr__(self, "B", float(self.B))

    @property
    def norm_sq(self) -> float:
        return float(math.fsum(self.mass.values()))

    @property
    def support(self):
        return tuple(self.mass)

    @classmethod
    def zero(cls, B=None):
        return cls({}, B)

    @classmethod
    def constant(cls, c: float):
        return cls({0: c * c}, abs(c))

    @classmethod
    def linear(cls, u, d: int):
        # orthonormal degree-1 harmonics are sqrt(d) x_s, so beta_s = u_s / sqrt(d)
        u = np.asarray(u, dtype=float)
        if u.shape != (d,):
            raise ValueError("direction must have length d")
        return cls({1: float(u @ u) / d}, float(np.max(np.abs(u))) / math.sqrt(d))

    def check_bound(self, system: EigenSystem) -> bool:
        """Necessary condition for |beta_i| <= B: mass_k <= N(d,k) B^2."""
        if self.B is None:
            return True
        counts = dict(zip(system.k.tolist(), system.counts))
        return all(v <= counts.get(k, math.inf) * self.B**2 * (1 + 1e-12)
                   for k, v in self.mass.items())

    def to_dict(self):
        return {"mass": {str(k): v for k, v in self.mass.items()}, "B": self.B}


# -------------------------------------------------------------------- kappa
@dataclass(frozen=True)
class KappaSolution:
    kappa: float
    log_kappa: float
    residual: float
    iterations: int
    tail_term: float  # upper bound on the omitted modes' share of the sum

    def tail_ok(self, m) -> bool:
        return self.tail_term <= KAPPA_TAIL_TOL * m


def _excess(system, m, delta, log_kappa):
    return _kernels.kappa_excess(system.log_lambda, system.log_count, system.count_array,
                                 float(m), float(delta), float(log_kappa))


def solve_kappa(system, m, delta: float = 0.0) -> KappaSolution:
    """Bisection on log kappa; the left side is strictly decreasing in kappa."""
    system = as_system(system)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m!r}")
    if delta < 0 or not np.isfinite(delta):
        raise ValueError(f"ridge delta must be finite and >= 0, got {delta!r}")
    if delta == 0 and system.flattened_total <= m:
        raise InsufficientRankError(
            f"ridgeless fixed point needs retained rank > m (rank {system.flattened_total}, m {m})")
    log_trace = float(np.logaddexp.reduce(system.log_count + system.log_lambda))
    lo = float(system.log_lambda[-1]) + math.log(1e-6)
    hi = log_trace + math.log(1e6)
    if delta > 0:
        hi = max(hi, math.log(delta / m) + 1.0)
    for _ in range(400):
        if _excess(system, m, delta, lo) > 0:
            break
        lo -= 5.0
    else:
        raise SolverError("could not bracket kappa from below")
    for _ in range(400):
        if _excess(system, m, delta, hi) < 0:
            break
        hi += 5.0
    else:
        raise SolverError("could not bracket kappa from above")
    log_k, n_iter = _kernels.kappa_bisect(system.log_lambda, system.log_count, system.count_array,
                                          float(m), float(delta), lo, hi, 0.0)
    res = abs(_excess(system, m, delta, log_k))
    # kappa itself may underflow (tiny eigenvalues at large m); log_kappa stays exact
    kappa = math.exp(log_k)
    return KappaSolution(kappa, log_k, res, int(n_iter), math.exp(system.log_tail_bound - log_k))


def _log_k(kappa, log_kappa):
    if log_kappa is not None:
        return float(log_kappa)
    if not kappa > 0:
        raise ValueError("kappa must be > 0")
    return math.log(kappa)


def learnabilities(system, kappa: Optional[float] = None, *,
                   log_kappa: Optional[float] = None) -> np.ndarray:
    system = as_system(system)
    return np.exp(-np.logaddexp(0.0, _log_k(kappa, log_kappa) - system.log_lambda))


def _one_minus_l(system, log_k):
    return np.exp(-np.logaddexp(0.0, system.log_lambda - log_k))


def overfitting_coefficient(system, kappa: Optional[float], m, delta: float = 0.0, *,
                            log_kappa: Optional[float] = None) -> float:
    """E = m / (m - sum N L^2).

    Written as sum N L (1 - L) + (m - sum N L): exact for any kappa, and at
    the fixed point the second term is delta/kappa, so nothing cancels.
    """
    system = as_system(system)
    log_k = _log_k(kappa, log_kappa)
    L = learnabilities(system, log_kappa=log_k)
    w = system.count_array * L
    denom = float(np.sum(w * _one_minus_l(system, log_k)))
    # m - sum N L = delta/kappa - excess, the excess evaluated without cancellation
    denom -= _excess(system, m, delta, log_k)
    if delta > 0:
        denom += delta * math.exp(-log_k)
    if not denom > 0:
        raise SolverError("sum of squared learnabilities reaches m")
    return m / denom


@dataclass(frozen=True)
class RiskPrediction:
    kappa: float
    log_kappa: float
    learnabilities: np.ndarray
    e_factor: float
    bias: float  # e_factor * bias_inner
    variance: float  # e_factor * sigma_sq
    total: float
    residual: float
    bias_inner: float
    sigma_sq: float
    null_risk: float

    def to_dict(self):
        return {"kappa": self.kappa, "log_kappa": self.log_kappa, "e_factor": self.e_factor, "bias": self.bias,
                "variance": self.variance, "total": self.total, "residual": self.residual}


def _bias_inner(system, target, log_k):
    if not target.mass:
        return 0.0
    idx = {int(k): i for i, k in enumerate(system.k)}
    missing = [k for k in target.mass if k not in idx]
    if missing:
        raise ValueError(f"target degrees {missing} lie outside the retained spectrum")
    oml = _one_minus_l(system, log_k)
    return float(math.fsum(oml[idx[k]] ** 2 * v for k, v in target.mass.items()))


def predicted_risk(system, target: Optional[TargetSpec], sigma_sq: float, m,
                   delta: float = 0.0) -> RiskPrediction:
    system = as_system(system)
    target = TargetSpec.zero() if target is None else target
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be >= 0")
    sol = solve_kappa(system, m, delta)
    L = learnabilities(system, log_kappa=sol.log_kappa)
    E = overfitting_coefficient(system, None, m, delta, log_kappa=sol.log_kappa)
    bi = _bias_inner(system, target, sol.log_kappa)
    return RiskPrediction(sol.kappa, sol.log_kappa, L, E, E * bi, E * sigma_sq, E * (bi + sigma_sq),
                          sol.residual, bi, float(sigma_sq), float(sigma_sq) + target.norm_sq)


def gaussian_system(d: int, tau: float, m: int, tail_tol: float = DEFAULT_TAIL_TOL,
                    delta: float = 0.0) -> EigenSystem:
    """Gaussian spectrum truncated finely enough that the omitted modes cannot move kappa."""
    spec = SpectrumSpec(d, tau)
    log_tol = math.log(tail_tol)
    for _ in range(8):
        system = build_spectrum(spec, m, log_tail_tol=log_tol)
        sol = solve_kappa(system, m, delta)
        if sol.tail_ok(m):
            return system
        need = (math.log(KAPPA_TAIL_TOL * m * 0.1) + sol.log_kappa
                - math.log(system.trace_partial))
        log_tol = min(log_tol - math.log(1e3), need)
    raise SolverError(f"could not certify the truncated kappa (d={d}, tau={tau}, m={m})")


# ------------------------------------------------------- flattened oracle
def predicted_risk_flattened(lam, beta_sq, sigma_sq, m, delta=0.0):
    """Per-harmonic evaluation of the closed form with an independent root finder.

    Modes with lam > kappa contribute 1 - kappa/(lam + kappa), the integer
    part counted exactly, so neither the root nor E suffers cancellation.
    """
    lam = np.asarray(lam, dtype=float)
    beta_sq = np.asarray(beta_sq, dtype=float)

    def f(kappa):
        big = lam > kappa
        rest = math.fsum(lam[~big] / (lam[~big] + kappa)) - math.fsum(kappa / (lam[big] + kappa))
        return (int(big.sum()) - m) + rest + delta / kappa

    lo, hi = lam.min() * 1e-12, lam.sum() * 1e12 + delta
    while f(lo) <= 0:
        lo *= 1e-6
    kappa = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    L = lam / (lam + kappa)
    one_minus = kappa / (lam + kappa)
    E = m / (math.fsum(L * one_minus) + delta / kappa - f(kappa))
    bias = math.fsum(one_minus**2 * beta_sq)
    return {"kappa": kappa, "e_factor": E, "total": E * (bias + sigma_sq), "bias_inner": bias}


# -------------------------------------------------------- effective ranks
class _Blocks:
    """Block view of a spectrum: flattened positions and log tail sums."""

    def __init__(self, system: EigenSystem):
        self.system = system
        self.log_lam = system.log_lambda
        self.cum = system.cumulative()  # exact ints
        self.cum_f = np.array([float(c) for c in self.cum])
        self.start = np.concatenate(([0], self.cum[:-1])).astype(object)
        log_a = system.log_count + self.log_lam
        log_a2 = system.log_count + 2.0 * self.log_lam
        with np.errstate(divide="ignore"):
            log_mid = math.log(system.tail_bound / 2.0) if system.tail_bound > 0 else -np.inf
        # mass strictly after each block, with the omitted tail at its midpoint
        suf = np.logaddexp.accumulate(log_a[::-1])[::-1]
        suf2 = np.logaddexp.accumulate(log_a2[::-1])[::-1]
        self.log_after = np.logaddexp(np.concatenate((suf[1:], [-np.inf])), log_mid)
        self.log_after2 = np.logaddexp(np.concatenate((suf2[1:], [-np.inf])),
                                       log_mid + self.log_lam[-1])
        # k + r_k is constant on a block: cum_b + after_b / lam_b
        self.C = self.cum_f + np.exp(self.log_after - self.log_lam)

    def block_of(self, k: int) -> int:
        """Block containing flattened position k+1 (0-based k)."""
        b = int(np.searchsorted(self.cum_f, float(k) + 1, side="left"))
        # guard float rounding on huge counts
        while b > 0 and self.cum[b - 1] >= k + 1:
            b -= 1
        while b < len(self.cum) and self.cum[b] < k + 1:
            b += 1
        if b >= len(self.cum):
            raise IndexError(f"index {k} beyond retained rank {self.cum[-1]}")
        return b

    def r_in(self, b: int, k: int) -> float:
        return float(self.cum[b] - k) + math.exp(self.log_after[b] - self.log_lam[b])

    def r(self, k: int) -> float:
        return self.r_in(self.block_of(k), k)

    def R(self, k: int) -> float:
        b = self.block_of(k)
        log_n = math.log(float(self.cum[b] - k))
        s1 = np.logaddexp(log_n + self.log_lam[b], self.log_after[b])
        s2 = np.logaddexp(log_n + 2.0 * self.log_lam[b], self.log_after2[b])
        return float(math.exp(2.0 * s1 - s2))

    def lower_index(self, m) -> int:
        """Largest block boundary strictly below m (0 when the first block reaches m)."""
        i = int(np.searchsorted(self.cum_f, m, side="left"))
        while i > 0 and self.cum[i - 1] >= m:
            i -= 1
        while i < len(self.cum) and self.cum[i] < m:
            i += 1
        return int(self.cum[i - 1]) if i > 0 else 0

    def upper_index(self, m) -> Optional[int]:
        L = self.lower_index(m)
        i = 0 if L == 0 else int(np.searchsorted(self.cum_f, float(L), side="left")) + 1
        while i < len(self.cum) and self.cum[i] < m:
            i += 1
        return int(self.cum[i]) if i < len(self.cum) else None

    def first_k(self, m, b_param=1.0, strict=False) -> Optional[int]:
        """Smallest k with k + b r_k >= m (> m when strict), searched block by block."""
        for i in range(len(self.cum)):
            s, e = int(self.start[i]), int(self.cum[i]) - 1
            # value at k is (1-b) k + b C_i, nondecreasing in k for b <= 1
            def val(k):
                return (1.0 - b_param) * k + b_param * self.C[i]
            hit = (lambda v: v > m) if strict else (lambda v: v >= m)
            if hit(val(s)):
                return s
            if b_param < 1.0 and hit(val(e)):
                k = (m - b_param * self.C[i]) / (1.0 - b_param)
                k = max(s, int(math.floor(k)) - 1)
                while not hit(val(k)):
                    k += 1
                return k
        return None


@dataclass(frozen=True)
class EffectiveRanks:
    at: tuple
    r: np.ndarray
    R: np.ndarray


def effective_ranks(system, at) -> EffectiveRanks:
    """r_k = sum_{i>k} lam_i / lam_{k+1}, R_k = (sum_{i>k} lam_i)^2 / sum_{i>k} lam_i^2.

    Indices are 1-based as in lam_1 >= lam_2 >= ..., so k = 0 uses the whole
    spectrum.
    """
    system = as_system(system)
    bl = _Blocks(system)
    at = tuple(int(k) for k in np.atleast_1d(at))
    if any(k < 0 for k in at):
        raise ValueError("indices must be >= 0")
    return EffectiveRanks(at, np.array([bl.r(k) for k in at]), np.array([bl.R(k) for k in at]))


# ------------------------------------------------------------ E0 bracket
@dataclass(frozen=True)
class BoundSide:
    value: Optional[float]
    k: Optional[int]
    precondition: bool
    note: str = ""


@dataclass(frozen=True)
class E0Bracket:
    e0: float
    upper: BoundSide
    lower: BoundSide
    zhou_lower: BoundSide
    lower_R: Optional[BoundSide] = None  # k >= m side with R_k for r_k; diagnostic only

    def contains(self, rtol=1e-12) -> bool:
        ok = True
        if self.upper.precondition:
            ok &= self.e0 <= self.upper.value * (1 + rtol)
        for side in (self.lower, self.zhou_lower):
            if side.precondition:
                ok &= self.e0 >= side.value * (1 - rtol)
        return bool(ok)


def _upper_at(bl, m, k):
    r = bl.r(k)
    if not (k < m and r + k > m):
        return BoundSide(None, k, False, "needs k < m and k + r_k > m")
    return BoundSide(1.0 / ((1.0 - k / m) * (1.0 - m / (k + r))), k, True)


def e0_bracket(system, m, b: float = 1.0) -> E0Bracket:
    system = as_system(system)
    bl = _Blocks(system)
    sol = solve_kappa(system, m, 0.0)
    e0 = overfitting_coefficient(system, None, m, log_kappa=sol.log_kappa)

    upper = _upper_at(bl, m, bl.lower_index(m))

    # k >= m: (m/k)(k-m)/(k-m+r_k) grows along a block, so block ends are the candidates
    best = best_R = None
    first = max(int(np.searchsorted(bl.cum_f, m, side="left")) - 1, 0)
    for i in range(first, len(bl.cum)):
        k = int(bl.cum[i]) - 1
        if k < m or k == 0:
            continue
        r = bl.r_in(i, k)
        val = 1.0 / (1.0 - (m / k) * (k - m) / (k - m + r))
        if best is None or val > best[0]:
            best = (val, k)
        # R_k is not monotone along a block, so only block ends are tried here too
        val_R = 1.0 / (1.0 - (m / k) * (k - m) / (k - m + bl.R(k)))
        if best_R is None or val_R > best_R[0]:
            best_R = (val_R, k)
    lower = (BoundSide(best[0], best[1], True) if best is not None
             else BoundSide(None, None, False, "no retained k >= m"))
    lower_R = (BoundSide(best_R[0], best_R[1], True) if best_R is not None
               else BoundSide(None, None, False, "no retained k >= m"))

    if not (0 < b <= 1):
        zhou = BoundSide(None, None, False, "b must lie in (0, 1]")
    else:
        k = bl.first_k(m, b)
        if k is None or k >= m:
            zhou = BoundSide(None, k, False, "no k < m with k + b r_k >= m")
        else:
            zhou = BoundSide(1.0 / (1.0 - (b / (b + 1.0)) ** 2 * k / m), k, True)
    return E0Bracket(e0, upper, lower, zhou, lower_R)


# ------------------------------------------------- benign / catastrophic
@dataclass(frozen=True)
class BenignCheck:
    k_n: int
    k_ratio: float  # k_n / n
    rank_ratio: float  # n / R_{k_n}


def benign_condition_check(system, m) -> BenignCheck:
    """k_n is the smallest k with n < k + r_k."""
    system = as_system(system)
    bl = _Blocks(system)
    k = bl.first_k(m, 1.0, strict=True)
    if k is None:
        raise InsufficientRankError("k_n lies beyond the retained rank")
    return BenignCheck(k, k / m, m / bl.R(k))


def catastrophic_condition_check(system, m, eps: float) -> float:
    """r_k / k at k = ceil((1 + eps) m)."""
    system = as_system(system)
    if eps <= 0:
        raise ValueError("eps must be > 0")
    k = int(math.ceil((1.0 + eps) * m))
    if k >= system.flattened_total:
        raise InsufficientRankError(f"retained rank {system.flattened_total} does not exceed k={k}")
    return _Blocks(system).r(k) / k
