"""Bandwidth and dimension schedules, theorem bounds, and regime classification."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import eigenframework as ef
from .harmonics import index_summary, multiplicity_int
from .spectrum import EigenSystem

# classification thresholds
BENIGN_EXCESS = 0.05
BENIGN_SLOPE = -0.1
CATASTROPHIC_SLOPE = 0.2
TEMPERED_BAND = 0.2

# assumption flag thresholds
A_MAX = 1.0 + 1e-6
B_MIN = 1.0
C_MAX = 10.0

CONTAIN_RTOL = 1e-10


# ---------------------------------------------------------------- schedules
_BW_KINDS = ("inverse_log", "log", "power", "critical", "fixed")


@dataclass(frozen=True)
class BandwidthSchedule:
    """tau_m = c * m^{-1/(d-1)} * t(m), or a fixed tau = c.

    kind: inverse_log (t = 1/log m), log (t = log m), power (t = m^p),
    critical (t = 1), fixed (tau = c for every m).
    """

    kind: str
    c: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in _BW_KINDS:
            raise ValueError(f"unknown bandwidth schedule {self.kind!r}; expected one of {_BW_KINDS}")
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError("schedule constant c must be > 0")

    def tau(self, m: int, d: int) -> float:
        if self.kind == "fixed":
            return float(self.c)
        base = self.c * m ** (-1.0 / (d - 1))
        if self.kind == "inverse_log":
            return base / math.log(m)
        if self.kind == "log":
            return base * math.log(m)
        if self.kind == "power":
            return base * m ** self.p
        return base

    @property
    def form(self) -> str:
        """Growth of tau_m relative to m^{-1/(d-1)}."""
        if self.kind == "inverse_log" or (self.kind == "power" and self.p < 0):
            return "little_o"
        if self.kind in ("log", "fixed") or (self.kind == "power" and self.p > 0):
            return "big_omega"
        return "theta"

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "p": self.p}


def classify_bandwidth_regime(d: int, schedule: BandwidthSchedule) -> int:
    """Case 1 (tau = o(crit)), 2 (omega), or 3 (Theta), read off the schedule."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if schedule.kind == "fixed" and d == 2:
        # m^{-1/(d-1)} = 1/m still vanishes
        return 2
    return {"little_o": 1, "big_omega": 2, "theta": 3}[schedule.form]


_DIM_KINDS = ("fixed", "polynomial", "logarithmic", "subpolynomial")


@dataclass(frozen=True)
class DimensionSchedule:
    """Grid of (d, m) pairs tied by a scaling relation.

    fixed: d fixed, ``values`` are m; polynomial: m = round(d^alpha), ``values``
    are d; logarithmic: m = 2^d, ``values`` are d; subpolynomial: d = 2^(2^l),
    m = 2^(2^(2l)), ``values`` are l.
    """

    kind: str
    values: tuple
    alpha: Optional[float] = None
    d: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _DIM_KINDS:
            raise ValueError(f"unknown dimension schedule {self.kind!r}; expected one of {_DIM_KINDS}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if self.kind == "polynomial" and not (self.alpha and self.alpha > 0):
            raise ValueError("polynomial schedule needs alpha > 0")
        if self.kind == "fixed" and self.d is None:
            raise ValueError("fixed schedule needs d")

    def pairs(self):
        out = []
        for v in self.values:
            if self.kind == "fixed":
                out.append((int(self.d), v))
            elif self.kind == "polynomial":
                out.append((v, int(round(v ** self.alpha))))
            elif self.kind == "logarithmic":
                out.append((v, 2 ** v))
            else:
                out.append((2 ** (2 ** v), 2 ** (2 ** (2 * v))))
        return out

    def to_dict(self):
        return {"kind": self.kind, "values": list(self.values), "alpha": self.alpha, "d": self.d}


def geometric_grid(m0: int = 32, n: int = 8, ratio: int = 2):
    return [m0 * ratio**i for i in range(n)]


# -------------------------------------------------------------- assumptions
@dataclass(frozen=True)
class IndexInfo:
    L_m: int
    U_m: Optional[int]
    block: int  # block holding degree k_m (block 0 when L_m = 0)


def _index_info(system: EigenSystem, m) -> IndexInfo:
    bl = ef._Blocks(system)
    L = bl.lower_index(m)
    U = bl.upper_index(m)
    blk = 0 if L == 0 else int(np.searchsorted(bl.cum_f, float(L), side="left"))
    while L and bl.cum[blk] != L:
        blk += 1 if bl.cum[blk] < L else -1
    return IndexInfo(L, U, blk)


@dataclass(frozen=True)
class AssumptionCheck:
    A: float
    b: float
    c: float
    A_ok: bool
    b_ok: bool
    c_ok: bool
    L_m: int
    U_m: Optional[int]


def verify_assumptions(system, m, A_max=A_MAX, b_min=B_MIN, c_max=C_MAX) -> AssumptionCheck:
    """A = trace (with the tail bound), b = largest admissible lower-eigenvalue
    constant, c = smallest admissible decay constant."""
    system = ef.as_system(system)
    info = _index_info(system, m)
    lam_min = math.exp(system.log_lambda[info.block])
    A = system.trace_partial + system.tail_bound
    b = (m - info.L_m) * lam_min
    c = 1.0 / (lam_min * system.counts[info.block])
    return AssumptionCheck(A, b, c, A <= A_max, b >= b_min, c <= c_max, info.L_m, info.U_m)


# ------------------------------------------------------------------ bounds
@dataclass(frozen=True)
class UpperBound:
    variant: str
    value: Optional[float]
    factor: Optional[float]
    noise_term: Optional[float]
    bias_term: Optional[float]
    L_m: int
    U_m: Optional[int]
    A: float
    B: float
    ok: bool
    note: str = ""


def _default_B(target):
    if target.B is not None:
        return target.B
    return math.sqrt(max(target.mass.values())) if target.mass else 0.0


def master_upper_bound(d, m, system, target, sigma_sq, variant="squared",
                       A: Optional[float] = None, B: Optional[float] = None) -> UpperBound:
    """F sigma^2 + F B^2 (A^2/m^2) sum N/lam^2  (squared), or A/m^2 sum N/lam (linear),

    F = (1 - L_m/m)^{-1} (1 - m/U_m)^{-1}; sums over degrees in the target support.
    """
    if variant not in ("squared", "linear"):
        raise ValueError("variant must be 'squared' or 'linear'")
    system = ef.as_system(system)
    target = ef.TargetSpec.zero() if target is None else target
    info = _index_info(system, m)
    A = system.trace_partial + system.tail_bound if A is None else float(A)
    B = _default_B(target) if B is None else float(B)
    if d is not None and system.spec is not None:
        s = index_summary(d, m)
        if (s.L_m, s.U_m) != (info.L_m, info.U_m):
            raise AssertionError("block indices disagree with the harmonic index summary")
    if info.U_m is None or info.U_m <= m:
        return UpperBound(variant, None, None, None, None, info.L_m, info.U_m, A, B, False,
                          "needs L_m < m < U_m within retained degrees")
    F = 1.0 / ((1.0 - info.L_m / m) * (1.0 - m / info.U_m))
    idx = {int(k): i for i, k in enumerate(system.k)}
    if any(k not in idx for k in target.mass):
        return UpperBound(variant, None, F, None, None, info.L_m, info.U_m, A, B, False,
                          "target support outside retained degrees")
    rows = [idx[k] for k in target.mass]
    p = 2.0 if variant == "squared" else 1.0
    s = math.fsum(math.exp(system.log_count[i] - p * system.log_lambda[i]) for i in rows)
    bias = F * B * B * A**p / (m * m) * s
    noise = F * sigma_sq
    return UpperBound(variant, noise + bias, F, noise, bias, info.L_m, info.U_m, A, B, True)


@dataclass(frozen=True)
class LowerBound:
    value: Optional[float]
    b: float
    b_sup: float
    ok: bool
    note: str = ""


def risk_lower_bound(d, m, system, sigma_sq, b: Optional[float] = None) -> LowerBound:
    """(1 - (b/(b+1))^2 L_m/m)^{-1} sigma^2, valid when b <= (m - L_m) min lam."""
    system = ef.as_system(system)
    chk = verify_assumptions(system, m)
    b_sup = chk.b
    if b is None:
        b = min(1.0, b_sup)
    if not (b > 0 and b <= b_sup):
        return LowerBound(None, b, b_sup, False, "lower-eigenvalue assumption fails for this b")
    q = (b / (b + 1.0)) ** 2
    return LowerBound(sigma_sq / (1.0 - q * chk.L_m / m), b, b_sup, True)


# -------------------------------------------------------------------- scan
TargetRule = Union[str, Callable[[int], ef.TargetSpec], ef.TargetSpec, None]


def make_target(rule: TargetRule, d: int) -> ef.TargetSpec:
    """'zero', 'constant:c' or 'linear:c' (u = c e_1), a TargetSpec, or a callable of d."""
    if rule is None:
        return ef.TargetSpec.zero()
    if isinstance(rule, ef.TargetSpec):
        return rule
    if callable(rule):
        return rule(d)
    name, _, arg = str(rule).partition(":")
    val = float(arg) if arg else 1.0
    if name == "zero":
        return ef.TargetSpec.zero()
    if name == "constant":
        return ef.TargetSpec.constant(val)
    if name == "linear":
        u = np.zeros(d)
        u[0] = val
        return ef.TargetSpec.linear(u, d)
    raise ValueError(f"unknown target rule {rule!r}")


@dataclass(frozen=True)
class ScanPoint:
    m: int
    d: int
    tau: float
    kappa: float = math.nan
    e0: float = math.nan
    total: float = math.nan
    upper_sq: float = math.nan
    upper_lin: float = math.nan
    lower: float = math.nan
    A: float = math.nan
    b: float = math.nan
    c: float = math.nan
    flags: tuple = ()
    L_m: Optional[int] = None
    U_m: Optional[int] = None
    null_risk: float = math.nan
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    def violations(self):
        return [f for f in self.flags if f.endswith("_violated")]


CSV_COLUMNS = ("m", "d", "tau", "kappa", "e0", "total", "upper_sq", "upper_lin",
               "lower", "A", "b", "c", "flags")


def evaluate_point(d: int, m: int, tau: float, target: ef.TargetSpec, sigma_sq: float) -> ScanPoint:
    try:
        system = ef.gaussian_system(d, tau, m)
        pred = ef.predicted_risk(system, target, sigma_sq, m)
        chk = verify_assumptions(system, m)
        up_sq = master_upper_bound(d, m, system, target, sigma_sq, "squared")
        up_lin = master_upper_bound(d, m, system, target, sigma_sq, "linear")
        low = risk_lower_bound(d, m, system, sigma_sq)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return ScanPoint(m, d, tau, error=f"{type(exc).__name__}: {exc}")
    flags = []
    if not chk.A_ok:
        flags.append("A_exceeds")
    if not chk.b_ok:
        flags.append("b_below_1")
    if not chk.c_ok:
        flags.append("c_large")
    for name, ub in (("upper_sq", up_sq), ("upper_lin", up_lin)):
        if not ub.ok:
            flags.append(f"{name}_undefined")
        elif pred.total > ub.value * (1 + CONTAIN_RTOL):
            flags.append(f"{name}_violated")
    if not low.ok:
        flags.append("lower_undefined")
    elif pred.total < low.value * (1 - CONTAIN_RTOL):
        flags.append("lower_violated")

    def v(x):
        return math.nan if x is None else float(x)

    return ScanPoint(m, d, tau, pred.kappa, pred.e_factor, pred.total, v(up_sq.value),
                     v(up_lin.value), v(low.value), chk.A, chk.b, chk.c, tuple(flags),
                     chk.L_m, chk.U_m, pred.null_risk)


def _slope(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if len(x) < 2 or not np.all(np.isfinite(y)):
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def classify(ms: Sequence[float], totals: Sequence[float], sigma_sq: float) -> str:
    """Pure function of the series; thresholds are the module constants."""
    ms = np.asarray(ms, dtype=float)
    tot = np.asarray(totals, dtype=float)
    if len(ms) < 2 or sigma_sq <= 0 or not np.all(np.isfinite(tot)):
        return "indeterminate"
    rel = (tot - sigma_sq) / sigma_sq
    half = slice(len(ms) // 2, None) if len(ms) >= 4 else slice(None)
    if rel[-1] < BENIGN_EXCESS and np.all(rel > 0) and _slope(ms, rel) <= BENIGN_SLOPE:
        return "benign"
    th, mh = tot[half], ms[half]
    if np.all(np.diff(th) > 0) and _slope(mh, th) >= CATASTROPHIC_SLOPE:
        return "catastrophic"
    eh = rel[half]
    if np.min(rel) >= BENIGN_EXCESS:
        mean = float(np.mean(eh))
        if np.all(np.abs(eh - mean) <= TEMPERED_BAND * mean):
            return "tempered"
        return "inconsistent_nonbenign"
    return "indeterminate"


@dataclass(frozen=True)
class RegimeReport:
    classification: str
    points: tuple
    slope_total: float  # last half, log total vs log m
    slope_excess: float  # whole grid, log(total - sigma^2) vs log m
    sigma_sq: float
    schedule: dict = field(default_factory=dict)

    @property
    def violations(self):
        return [(p.m, p.d, f) for p in self.points for f in p.violations()]

    def to_dict(self):
        return {
            "classification": self.classification,
            "sigma_sq": self.sigma_sq,
            "slope_total": self.slope_total,
            "slope_excess": self.slope_excess,
            "schedule": self.schedule,
            "points": [{**{c: getattr(p, c) for c in CSV_COLUMNS},
                        "flags": ";".join(p.flags), "L_m": p.L_m, "U_m": p.U_m,
                        "null_risk": p.null_risk, "error": p.error} for p in self.points],
        }

    def csv_rows(self):
        for p in self.points:
            row = [getattr(p, c) for c in CSV_COLUMNS[:-1]]
            flags = list(p.flags) + ([f"error={p.error}"] if p.error else [])
            yield row + [";".join(flags)]


def scan(schedule, target_rule: TargetRule, sigma_sq: float, grid=None, d: Optional[int] = None,
         tau: float = 1.0, workers: int = 1) -> RegimeReport:
    """Evaluate predictions and bounds along a schedule.

    BandwidthSchedule: ``d`` is required and ``grid`` lists m (default geometric
    32..4096). DimensionSchedule: (d, m) come from the schedule, with fixed
    bandwidth ``tau``.
    """
    if isinstance(schedule, BandwidthSchedule):
        if d is None:
            raise ValueError("bandwidth schedules need d")
        ms = list(grid) if grid is not None else geometric_grid()
        pts = [(d, int(m), schedule.tau(int(m), d)) for m in ms]
    elif isinstance(schedule, DimensionSchedule):
        pairs = schedule.pairs() if grid is None else list(grid)
        pts = [(int(dd), int(mm), float(tau)) for dd, mm in pairs]
    else:
        raise TypeError("schedule must be a BandwidthSchedule or DimensionSchedule")

    def run(p):
        dd, mm, tt = p
        return evaluate_point(dd, mm, tt, make_target(target_rule, dd), sigma_sq)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            points = tuple(ex.map(run, pts))
    else:
        points = tuple(run(p) for p in pts)
    good = [p for p in points if not p.failed]
    ms = [p.m for p in good]
    tot = [p.total for p in good]
    half = slice(len(ms) // 2, None) if len(ms) >= 4 else slice(None)
    slope_total = _slope(ms[half], tot[half]) if len(ms) >= 2 else math.nan
    exc = [t - sigma_sq for t in tot]
    slope_excess = _slope(ms, exc) if len(ms) >= 2 and min(exc, default=0) > 0 else math.nan
    cls = classify(ms, tot, sigma_sq) if len(good) == len(points) else "indeterminate"
    return RegimeReport(cls, points, slope_total, slope_excess, float(sigma_sq), schedule.to_dict())


# ------------------------------------------------- multiplicity scaling
@dataclass(frozen=True)
class MultiplicityPoint:
    d: int
    m: int
    k_m: int
    L_ratio: float  # L_m / m
    inv_U_ratio: float  # m / U_m
    N_ratios: tuple  # N(d, k_m + i) / m for i = -1, 0, 1
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# lower/upper constants of the log-scaling theorem, for i = -1, 0, +1
LOG_SCALING_LO = (1 / 54, 1 / 9, 2 / 3)
LOG_SCALING_HI = (1 / 3, 1.0, 6.0)


def multiplicity_scaling_report(schedule: DimensionSchedule):
    out = []
    for d, m in schedule.pairs():
        s = index_summary(d, m)
        km = s.k_m
        nr = tuple(multiplicity_int(d, km + i) / m if km + i >= 0 else math.nan
                   for i in (-1, 0, 1))
        checks = {"L_lt_m_le_U": s.L_m < m <= s.U_m}
        if schedule.kind == "logarithmic":
            checks["k_m_in_d/5..d/2"] = d / 5 <= km <= d / 2
            for i, (lo, hi, r) in enumerate(zip(LOG_SCALING_LO, LOG_SCALING_HI, nr)):
                if not math.isnan(r):
                    checks[f"N(k_m{i - 1:+d})/m_in_bracket"] = lo < r < hi
            checks["L_m/m_in_(1/9,1)"] = 1 / 9 < s.L_m / m < 1
            checks["U_m/m_in_[1,7)"] = 1 <= s.U_m / m < 7
        elif schedule.kind == "subpolynomial":
            l = int(round(math.log2(math.log2(d))))
            checks["k_m_eq_2^l+l-1"] = km == 2**l + l - 1
            checks["L_m/m_le_3/(2log m)"] = s.L_m / m <= 3 / (2 * math.log(m))
            checks["m/U_m_le_exp(-0.89 sqrt(log m))"] = (
                m / s.U_m <= math.exp(-0.89 * math.sqrt(math.log(m))))
        out.append(MultiplicityPoint(d, m, km, s.L_m / m, m / s.U_m, nr, checks))
    return out
