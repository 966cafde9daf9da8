"""Monte Carlo test risk of the minimum-norm Gaussian-kernel interpolant on the sphere."""
from dataclasses import dataclass, field
import math
from typing import Optional

import numpy as np
from scipy import linalg

from . import eigenframework as ef
from .spectrum import SpectrumSpec, eigenvalue_logs

JITTER_LADDER = (1e-12, 1e-10, 1e-8)
RESIDUAL_RTOL = 1e-6
MAX_FAIL_FRACTION = 0.2
M_CAP = 4096
WITNESS_SIZE = 1_000_000


class FitError(ArithmeticError):
    pass


class ExperimentError(RuntimeError):
    pass


try:  # optional high-precision rung
    import flint as _flint
    HAVE_FLINT = True
except ImportError:  # pragma: no cover - exercised only without the extra
    _flint = None
    HAVE_FLINT = False


# ------------------------------------------------------------------ targets
@dataclass(frozen=True)
class TargetFunction:
    """Constant f = c, or linear f(x) = u . x."""

    kind: str
    value: float = 0.0
    u: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"target kind must be 'constant' or 'linear', got {self.kind!r}")
        object.__setattr__(self, "u", tuple(float(v) for v in self.u))
        if self.kind == "linear" and not self.u:
            raise ValueError("linear target needs a direction u")

    @classmethod
    def constant(cls, c):
        return cls("constant", float(c))

    @classmethod
    def linear(cls, u):
        return cls("linear", u=tuple(u))

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if self.kind == "constant":
            return np.full(X.shape[0], self.value)
        return X @ np.asarray(self.u)

    def norm_sq(self, d: int) -> float:
        if self.kind == "constant":
            return self.value**2
        return float(np.dot(self.u, self.u)) / d

    def spec(self, d: int) -> ef.TargetSpec:
        if self.kind == "constant":
            return ef.TargetSpec.constant(self.value)
        if len(self.u) != d:
            raise ValueError("linear target direction must have length d")
        return ef.TargetSpec.linear(np.asarray(self.u), d)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, "u": list(self.u)}


def linear_mass_witness(u, d: int, seed: int = 0, n: int = WITNESS_SIZE):
    """Monte Carlo E[(u.x)^2] with its standard error, x uniform on the sphere."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 2**32 - 1])))
    acc = []
    u = np.asarray(u, dtype=float)
    for start in range(0, n, 100_000):
        X = sample_sphere(d, min(100_000, n - start), rng)
        acc.append((X @ u) ** 2)
    v = np.concatenate(acc)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# ----------------------------------------------------------------- sampling
def trial_stream(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial, independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial)])))


def sample_sphere(d: int, n: int, stream: np.random.Generator) -> np.ndarray:
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    Z = stream.standard_normal((n, d))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def gram(points, tau: float, other=None) -> np.ndarray:
    """exp(-|x - y|^2 / tau^2) between rows of ``points`` and ``other`` (default: itself)."""
    X = np.asarray(points, dtype=float)
    Y = X if other is None else np.asarray(other, dtype=float)
    sq = np.clip(2.0 - 2.0 * (X @ Y.T), 0.0, 4.0)
    K = np.exp(-sq / (tau * tau))
    if other is None:
        np.fill_diagonal(K, 1.0)
        K = 0.5 * (K + K.T)
    return K


# --------------------------------------------------------------- fitting
@dataclass
class Interpolant:
    method: str  # "cholesky", "arb" or "jitter"
    jitter: float  # relative jitter level, 0 when exact
    residual: float  # max |K alpha - y|
    alpha: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None
    tau: Optional[float] = None
    prec: int = 0
    _arb_alpha: object = field(default=None, repr=False)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self._arb_alpha is not None:
            return _arb_predict(self, X)
        return gram(X, self.tau, self.points) @ self.alpha if self.points is not None else None


def _residual(K, alpha, y):
    return float(np.max(np.abs(K @ alpha - y)))


def _cholesky_solve(K, y):
    try:
        c = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    alpha = linalg.cho_solve(c, y, check_finite=False)
    if not np.all(np.isfinite(alpha)):
        return None
    return alpha


def _arb_gram(A, B, inv_tau2, symmetric):
    from flint import arb_mat
    G = A * B.transpose()
    na, nb = A.nrows(), B.nrows()
    sa = [sum((A[i, j] ** 2 for j in range(A.ncols())), _flint.arb(0)) for i in range(na)]
    sb = sa if symmetric else [sum((B[i, j] ** 2 for j in range(B.ncols())), _flint.arb(0))
                               for i in range(nb)]
    K = arb_mat(na, nb)
    for i in range(na):
        if symmetric:
            K[i, i] = 1
            for j in range(i + 1, nb):
                v = (-(sa[i] + sb[j] - 2 * G[i, j]) * inv_tau2).exp()
                K[i, j] = v
                K[j, i] = v
        else:
            for j in range(nb):
                K[i, j] = (-(sa[i] + sb[j] - 2 * G[i, j]) * inv_tau2).exp()
    return K


def arb_precision(d: int, tau: float, m: int) -> int:
    """Working bits: 117 plus twice the log2 spread of the spectrum down to mode m."""
    spec = SpectrumSpec(d, tau)
    cum, k = 1, 0
    from .harmonics import multiplicity_int
    while cum < m:
        k += 1
        cum += multiplicity_int(d, k)
    ll = eigenvalue_logs(spec, k + 2)
    spread = (ll[0] - ll[-1]) / math.log(2.0)
    return int(max(128, 117 + 2 * math.ceil(spread)))


def _arb_fit(points, y, tau, prec):
    from flint import arb, arb_mat, ctx
    old = ctx.prec
    ctx.prec = prec
    try:
        A = arb_mat(points.tolist())
        inv_tau2 = arb(1) / (arb(tau) ** 2)
        K = _arb_gram(A, A, inv_tau2, True)
        Y = arb_mat([[float(v)] for v in y])
        al = K.solve(Y, nonstop=True, algorithm="approx")
        R = K * al - Y
        res = max(abs(float(R[i, 0].mid())) for i in range(len(y)))
        return al, res
    finally:
        ctx.prec = old


def _arb_predict(fit, X):
    from flint import arb, arb_mat, ctx
    old = ctx.prec
    ctx.prec = fit.prec
    try:
        A = arb_mat(fit.points.tolist())
        B = arb_mat(X.tolist())
        inv_tau2 = arb(1) / (arb(fit.tau) ** 2)
        Kt = _arb_gram(B, A, inv_tau2, False)
        P = Kt * fit._arb_alpha
        return np.array([float(P[i, 0].mid()) for i in range(X.shape[0])])
    finally:
        ctx.prec = old


def fit_interpolant(K, y, jitter_policy=JITTER_LADDER, points=None, tau=None,
                    high_precision: bool = True, prec: Optional[int] = None) -> Interpolant:
    """Solve K alpha = y.

    Ladder: float64 Cholesky; then, if ``points`` and ``tau`` are given and
    python-flint is installed, an arbitrary-precision solve on the exactly
    recomputed kernel; then Cholesky with relative ridge eps*trace/m for eps
    in ``jitter_policy``. A rung is accepted once its training residual is at
    most 1e-6 max|y|; jittered rungs are returned even above that so the
    caller can reject the trial.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    m = K.shape[0]
    tol = RESIDUAL_RTOL * max(float(np.max(np.abs(y))), np.finfo(float).tiny)
    pts = None if points is None else np.asarray(points, dtype=float)
    alpha = _cholesky_solve(K, y)
    if alpha is not None:
        res = _residual(K, alpha, y)
        if res <= tol:
            return Interpolant("cholesky", 0.0, res, alpha, pts, tau)
    if high_precision and HAVE_FLINT and pts is not None and tau is not None:
        p = prec if prec is not None else arb_precision(pts.shape[1], tau, max(m, 2))
        al, res = _arb_fit(pts, y, tau, p)
        if res <= tol:
            return Interpolant("arb", 0.0, res, None, pts, tau, p, al)
    scale = float(np.trace(K)) / m
    last = None
    for eps in jitter_policy:
        Kj = K + eps * scale * np.eye(m)
        alpha = _cholesky_solve(Kj, y)
        if alpha is None:
            continue
        last = Interpolant("jitter", float(eps), _residual(K, alpha, y), alpha, pts, tau)
        if last.residual <= tol:
            return last
    if last is not None:
        return last
    raise FitError("kernel matrix did not factorize at any jitter level")


def estimate_risk(fit: Interpolant, train_points, test_points, target, sigma_sq: float) -> float:
    """Mean squared error against f* on the test points, plus the noise variance."""
    if fit.points is None:
        fit.points = np.asarray(train_points, dtype=float)
    pred = fit.predict(test_points)
    err = pred - target(test_points)
    return float(np.mean(err * err) + sigma_sq)


# ---------------------------------------------------------------- driver
@dataclass(frozen=True)
class SimConfig:
    d: int
    m: int
    tau: float
    sigma_sq: float
    target: TargetFunction
    n_test: int = 1000
    n_trials: int = 32
    seed: int = 0
    jitter_policy: tuple = JITTER_LADDER
    high_precision: bool = True

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not (1 <= self.m <= M_CAP):
            raise ValueError(f"m must lie in [1, {M_CAP}]")
        if self.n_test < 100:
            raise ValueError("n_test must be >= 100")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.sigma_sq < 0 or not self.tau > 0:
            raise ValueError("need sigma_sq >= 0 and tau > 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "jitter_policy", tuple(float(e) for e in self.jitter_policy))

    def to_dict(self):
        return {"d": self.d, "m": self.m, "tau": self.tau, "sigma_sq": self.sigma_sq,
                "target": self.target.to_dict(), "n_test": self.n_test,
                "n_trials": self.n_trials, "seed": self.seed,
                "jitter_policy": list(self.jitter_policy), "high_precision": self.high_precision}


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    risk: float
    method: str
    jitter: float
    residual: float
    accepted: bool
    note: str = ""


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    empirical_risk_mean: float
    empirical_risk_stderr: float
    null_risk: float
    bayes_risk: float
    predicted_total: float
    trials: tuple

    @property
    def jitter_used(self):
        return tuple(t.jitter for t in self.trials)

    @property
    def train_residual_max(self):
        return tuple(t.residual for t in self.trials)

    @property
    def jitter_max(self) -> float:
        return max((t.jitter for t in self.trials if t.accepted), default=0.0)

    @property
    def n_failed(self) -> int:
        return sum(not t.accepted for t in self.trials)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "empirical_risk_mean": self.empirical_risk_mean,
            "empirical_risk_stderr": self.empirical_risk_stderr,
            "null_risk": self.null_risk,
            "bayes_risk": self.bayes_risk,
            "predicted_total": self.predicted_total,
            "trials": [{"trial": t.trial, "risk": t.risk, "method": t.method,
                        "jitter": t.jitter, "residual": t.residual,
                        "accepted": t.accepted, "note": t.note} for t in self.trials],
        }


SIM_CSV_COLUMNS = ("m", "d", "tau", "empirical_mean", "empirical_stderr", "predicted_total",
                   "null_risk", "bayes_risk", "jitter_max")


def sim_csv_row(r: SimResult):
    c = r.config
    return [c.m, c.d, c.tau, r.empirical_risk_mean, r.empirical_risk_stderr,
            r.predicted_total, r.null_risk, r.bayes_risk, r.jitter_max]


def run_trial(cfg: SimConfig, trial: int) -> TrialOutcome:
    rng = trial_stream(cfg.seed, trial)
    X = sample_sphere(cfg.d, cfg.m, rng)
    noise = math.sqrt(cfg.sigma_sq) * rng.standard_normal(cfg.m)
    y = cfg.target(X) + noise
    Xt = sample_sphere(cfg.d, cfg.n_test, rng)
    try:
        fit = fit_interpolant(gram(X, cfg.tau), y, cfg.jitter_policy, X, cfg.tau,
                              cfg.high_precision)
    except FitError as exc:
        return TrialOutcome(trial, math.nan, "failed", math.nan, math.nan, False, str(exc))
    tol = RESIDUAL_RTOL * max(float(np.max(np.abs(y))), np.finfo(float).tiny)
    if fit.residual > tol:
        return TrialOutcome(trial, math.nan, fit.method, fit.jitter, fit.residual, False,
                            "interpolation residual above tolerance")
    risk = estimate_risk(fit, X, Xt, cfg.target, cfg.sigma_sq)
    return TrialOutcome(trial, risk, fit.method, fit.jitter, fit.residual, True)


def predicted_total(cfg: SimConfig) -> float:
    if cfg.m < 2:
        return math.nan
    system = ef.gaussian_system(cfg.d, cfg.tau, cfg.m)
    return ef.predicted_risk(system, cfg.target.spec(cfg.d), cfg.sigma_sq, cfg.m).total


def run_experiment(cfg: SimConfig) -> SimResult:
    if cfg.target.kind == "linear":
        mean, se = linear_mass_witness(cfg.target.u, cfg.d, cfg.seed)
        want = cfg.target.norm_sq(cfg.d)
        if abs(mean - want) > 5 * se + 1e-12:
            raise ExperimentError(f"linear target mass {want} disagrees with witness {mean} +- {se}")
    trials = tuple(run_trial(cfg, t) for t in range(cfg.n_trials))
    ok = np.array([t.risk for t in trials if t.accepted])
    if len(trials) - ok.size > MAX_FAIL_FRACTION * len(trials):
        raise ExperimentError(
            f"{len(trials) - ok.size} of {len(trials)} trials failed (d={cfg.d}, m={cfg.m})")
    mean = float(ok.mean())
    se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else math.nan
    null = cfg.sigma_sq + cfg.target.norm_sq(cfg.d)
    return SimResult(cfg, mean, se, null, float(cfg.sigma_sq), predicted_total(cfg), trials)
