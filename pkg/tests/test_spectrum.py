import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from krr_overfit import spectrum as sp
from krr_overfit.harmonics import multiplicity_int

mpmath.mp.dps = 50


def lam_mp(d, tau, k):
    T = mpmath.mpf(2) / mpmath.mpf(tau) ** 2
    return (mpmath.e ** (-T) * mpmath.mpf(tau) ** (d - 2) * mpmath.besseli(k + mpmath.mpf(d) / 2 - 1, T)
            * mpmath.gamma(mpmath.mpf(d) / 2))


def test_top_eigenvalue_examples():
    # d=2: e^{-2} I_0(2); d=3: e^{-2} I_{1/2}(2) Gamma(3/2) in closed form
    assert math.exp(sp.eigenvalue_log(sp.SpectrumSpec(2, 1.0), 0)) == pytest.approx(
        math.exp(-2) * 2.2795853023360673, rel=1e-13)
    closed = math.exp(-2) * math.sqrt(1 / math.pi) * math.sinh(2) * math.gamma(1.5)
    assert math.exp(sp.eigenvalue_log(sp.SpectrumSpec(3, 1.0), 0)) == pytest.approx(closed, rel=1e-13)


def test_first_ratio_example():
    ll = sp.eigenvalue_logs(sp.SpectrumSpec(2, 1.0), 2)
    r = math.exp(ll[1] - ll[0])
    assert r == pytest.approx(0.697774657964008, rel=1e-12)
    assert 0.5 < r < 0.8


@given(st.integers(2, 16), st.floats(0.1, 4.0), st.integers(0, 60))
def test_eigenvalue_matches_mpmath(d, tau, k):
    got = sp.eigenvalue_log(sp.SpectrumSpec(d, tau), k)
    want = float(mpmath.log(lam_mp(d, tau, k)))
    assert got == pytest.approx(want, rel=1e-11, abs=1e-11)


def test_build_spectrum_examples():
    s = sp.build_spectrum(sp.SpectrumSpec(3, 1.0), 10, 1e-10)
    assert s.trace_partial + s.tail_bound == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.diff(s.log_lambda) < 0)
    s = sp.build_spectrum(sp.SpectrumSpec(2, 1.0), 4, 1e-10)
    assert s.flattened_total >= 40


@given(st.integers(2, 16), st.floats(0.1, 4.0), st.integers(2, 2000))
def test_trace_identity_and_margin(d, tau, m):
    s = sp.build_spectrum(sp.SpectrumSpec(d, tau), m)
    assert abs(s.trace_partial - 1.0) <= s.tail_bound + 1e-8
    assert s.flattened_total >= 10 * m
    assert s.tail_bound <= 1e-10 * s.trace_partial * (1 + 1e-11)
    assert np.all(np.diff(s.log_lambda) < 0)


@pytest.mark.parametrize("d,tau,m", [(2, 0.5, 50), (4, 1.0, 100), (6, 2.0, 20), (16, 0.3, 500)])
def test_tail_bound_covers_omitted_mass(d, tau, m):
    spec = sp.SpectrumSpec(d, tau)
    s = sp.build_spectrum(spec, m)
    K = s.n_degrees
    extra = sp.eigenvalue_logs(spec, 4 * K + 200)[K:]
    omitted = math.fsum(multiplicity_int(d, K + i) * math.exp(v) for i, v in enumerate(extra))
    assert omitted <= s.tail_bound


def test_truncation_cap():
    with pytest.raises(sp.TruncationError):
        sp.build_spectrum(sp.SpectrumSpec(2, 0.01), 4, max_degree=10)


@pytest.mark.parametrize("d,tau,n", [(2, 1.0, 11), (6, 0.5, 21)])
def test_ratio_bracket_examples(d, tau, n):
    spec = sp.SpectrumSpec(d, tau)
    ll = sp.eigenvalue_logs(spec, n)
    sys_ = sp.EigenSystem(spec, np.arange(n), ll, [multiplicity_int(d, k) for k in range(n)], 1.0, 0.0)
    rep = sp.check_ratio_bounds(sys_)
    assert len(rep.checks) == n - 1 and rep.n_violations == 0 and rep.max_violation == 0.0


def test_ratio_report_single_degree():
    spec = sp.SpectrumSpec(4, 1.0)
    one = sp.EigenSystem(spec, [0], [sp.eigenvalue_log(spec, 0)], [1], 0.3, 0.0)
    assert sp.check_ratio_bounds(one).checks == ()


@pytest.mark.parametrize("d", [2, 3, 4, 6, 8, 16])
@pytest.mark.parametrize("tau", [0.05, 0.25, 0.5, 1.0, 2.0, 4.0])
def test_first_eigenvalue_bracket_derived(d, tau):
    spec = sp.SpectrumSpec(d, tau)
    lo, hi = sp.first_eigenvalue_bracket(spec)
    assert lo < sp.eigenvalue_log(spec, 0) < hi


def test_first_eigenvalue_bracket_published():
    # the closed form as printed; it excludes the true top eigenvalue (see notes)
    misses = []
    for d in (2, 4, 8):
        for tau in (0.5, 1.0, 2.0):
            spec = sp.SpectrumSpec(d, tau)
            lo, hi = sp.first_eigenvalue_bracket_printed(spec)
            v = sp.eigenvalue_log(spec, 0)
            if not lo <= v <= hi:
                misses.append((d, tau, round(lo, 4), round(v, 4), round(hi, 4)))
    assert not misses, f"log lam_0 outside published bracket at {misses}"


@pytest.mark.parametrize("d", [2, 3, 6, 16])
@pytest.mark.parametrize("tau", [0.01, 0.02, 0.05, 0.25, 1.0])
def test_multi_step_ratio_regimes(d, tau):
    spec = sp.SpectrumSpec(d, tau)
    r = math.sqrt(spec.T)
    n = int(6 * r) + 10
    ll = sp.eigenvalue_logs(spec, n)
    near = int(0.05 * r)
    for k in range(near + 1):
        for j in range(near + 1):
            assert ll[k + j] - ll[k] > -6 * 0.05
    far = int(math.ceil(5 * r))
    for k in range(n - far):
        assert ll[k + far] - ll[k] < -25 / 4


def test_synthetic_spectrum_merges_and_sorts():
    s = sp.synthetic_spectrum([0.1, 0.5, 0.1, 0.2], [1, 2, 3, 1])
    assert s.counts == (2, 1, 4)
    np.testing.assert_allclose(s.lam, [0.5, 0.2, 0.1])
    assert s.trace_partial == pytest.approx(1.0 + 0.2 + 0.4)
    assert s.spec is None and s.d is None
    np.testing.assert_allclose(s.flatten(), [0.5, 0.5, 0.2, 0.1, 0.1, 0.1, 0.1])


def test_to_dict_fields():
    s = sp.build_spectrum(sp.SpectrumSpec(3, 1.0), 10)
    d = s.to_dict()
    assert set(d) == {"d", "tau", "degrees", "trace_partial", "tail_bound"}
    assert set(d["degrees"][0]) == {"k", "log_lambda", "count"}
    assert [g["count"] for g in d["degrees"][:3]] == [1, 3, 5]


@pytest.mark.parametrize("args", [(1, 1.0), (3, 0.0), (3, -1.0), (3, math.inf)])
def test_spec_validation(args):
    with pytest.raises(ValueError):
        sp.SpectrumSpec(*args)


def test_build_validation():
    spec = sp.SpectrumSpec(3, 1.0)
    for kw in ({"m": 1}, {"m": 10, "tail_tol": 0.0}, {"m": 10, "tail_tol": 1.0}):
        with pytest.raises(ValueError):
            sp.build_spectrum(spec, **kw)
