import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from krr_overfit import eigenframework as ef
from krr_overfit import regimes as rg
from krr_overfit.harmonics import index_summary
from krr_overfit.spectrum import synthetic_spectrum

GRID = rg.geometric_grid(64, 7)


# ---------------------------------------------------------------- schedules
def test_bandwidth_case_examples():
    assert rg.classify_bandwidth_regime(6, rg.BandwidthSchedule("inverse_log")) == 1
    assert rg.classify_bandwidth_regime(6, rg.BandwidthSchedule("fixed", 1.0)) == 2
    assert rg.classify_bandwidth_regime(6, rg.BandwidthSchedule("critical", 2.0)) == 3
    assert rg.classify_bandwidth_regime(6, rg.BandwidthSchedule("log")) == 2
    assert rg.classify_bandwidth_regime(6, rg.BandwidthSchedule("power", p=-0.1)) == 1
    assert rg.classify_bandwidth_regime(6, rg.BandwidthSchedule("power", p=0.1)) == 2


@given(st.sampled_from(["inverse_log", "log", "power", "critical", "fixed"]),
       st.floats(0.1, 10), st.floats(-0.5, 0.5), st.integers(2, 20), st.integers(2, 10**6))
def test_realized_tau_positive(kind, c, p, d, m):
    tau = rg.BandwidthSchedule(kind, c, p).tau(m, d)
    assert tau > 0 and math.isfinite(tau)


def test_realized_tau_values():
    assert rg.BandwidthSchedule("inverse_log").tau(1024, 6) == pytest.approx(1024 ** -0.2 / math.log(1024))
    assert rg.BandwidthSchedule("critical", 2.0).tau(1024, 6) == pytest.approx(2 * 1024 ** -0.2)


def test_dimension_pairs_exact():
    assert rg.DimensionSchedule("subpolynomial", (1, 2)).pairs() == [(4, 16), (16, 65536)]
    assert rg.DimensionSchedule("logarithmic", (10, 12)).pairs() == [(10, 1024), (12, 4096)]
    for d, m in rg.DimensionSchedule("polynomial", (16, 64, 256), alpha=1.5).pairs():
        assert abs(m / d**1.5 - 1) < 0.01
    assert rg.DimensionSchedule("fixed", (32, 64), d=5).pairs() == [(5, 32), (5, 64)]


@pytest.mark.parametrize("bad", [lambda: rg.BandwidthSchedule("nope"),
                                 lambda: rg.BandwidthSchedule("fixed", 0.0),
                                 lambda: rg.DimensionSchedule("polynomial", (4,)),
                                 lambda: rg.DimensionSchedule("fixed", (4,))])
def test_schedule_validation(bad):
    with pytest.raises(ValueError):
        bad()


# -------------------------------------------------------------- assumptions
def test_assumptions_gaussian():
    chk = rg.verify_assumptions(ef.gaussian_system(4, 1.0, 50), 50)
    assert chk.A == pytest.approx(1.0, abs=1e-8)
    assert chk.A_ok


def test_assumptions_flat():
    n, m = 20, 8
    chk = rg.verify_assumptions(synthetic_spectrum([1 / n], [n]), m)
    assert chk.A == pytest.approx(1.0)
    assert chk.L_m == 0  # no whole block lies below m
    assert chk.b == pytest.approx((m - chk.L_m) / n)


def test_assumptions_single_degree():
    chk = rg.verify_assumptions(synthetic_spectrum([0.3], [1]), 1)
    assert chk.c == pytest.approx(1 / 0.3)


def test_gaussian_indices_match_harmonics():
    for d, m in [(4, 50), (6, 300), (3, 17)]:
        chk = rg.verify_assumptions(ef.gaussian_system(d, 1.0, m), m)
        s = index_summary(d, m)
        assert (chk.L_m, chk.U_m) == (s.L_m, s.U_m)


# ------------------------------------------------------------------- bounds
def test_upper_zero_target():
    s = ef.gaussian_system(4, 1.0, 50)
    ub = rg.master_upper_bound(4, 50, s, ef.TargetSpec.zero(), 2.0)
    L, U = index_summary(4, 50).L_m, index_summary(4, 50).U_m
    assert ub.value == pytest.approx(2.0 / ((1 - L / 50) * (1 - 50 / U)))


def test_upper_flat_plugin():
    s = synthetic_spectrum([0.1], [10])
    t = ef.TargetSpec({0: 1.0}, B=1.0)
    F = 1 / ((1 - 0 / 5) * (1 - 5 / 10))
    sq = rg.master_upper_bound(None, 5, s, t, 1.0, "squared")
    lin = rg.master_upper_bound(None, 5, s, t, 1.0, "linear")
    assert sq.value == pytest.approx(F + F * 1.0**2 / 25 * 10 / 0.1**2)
    assert lin.value == pytest.approx(F + F * 1.0 / 25 * 10 / 0.1)


def test_upper_undefined_when_m_reaches_U():
    s = synthetic_spectrum([0.1], [10])
    assert not rg.master_upper_bound(None, 10, s, None, 1.0).ok


def test_corollary3_first_point_bound():
    d, m = 4, 16
    s = ef.gaussian_system(d, 1.0, m)
    t = ef.TargetSpec.constant(1.0)
    total = ef.predicted_risk(s, t, 1.0, m).total
    lm = math.log(m)
    cap = 1 / (1 - 1 / lm) / (1 - math.exp(-0.89 * math.sqrt(lm))) + 2 / m
    assert total <= cap


def test_lower_examples():
    s = synthetic_spectrum([0.5, 0.001], [5, 1000])
    lb = rg.risk_lower_bound(None, 10, s, 1.0)
    assert lb.b == 1.0 and lb.value == pytest.approx(8 / 7)
    tiny = rg.risk_lower_bound(None, 10**6, synthetic_spectrum([1e-7], [10**7]), 1.0)
    assert tiny.value == pytest.approx(1.0)


def test_lower_reports_assumption_failure():
    s = synthetic_spectrum([0.5, 0.001], [5, 1000])
    assert not rg.risk_lower_bound(None, 10, s, 1.0, b=100.0).ok


def test_lower_log_grid():
    d = 12
    m = 2**d
    s = ef.gaussian_system(d, 1.0, m)
    lb = rg.risk_lower_bound(d, m, s, 1.0)
    chk = rg.verify_assumptions(s, m)
    eta = 1 / (1 - (lb.b / (lb.b + 1)) ** 2 * chk.L_m / m) - 1
    assert eta > 0 and lb.value == pytest.approx(1 + eta)


# ----------------------------------------------------------- classification
def test_classify_labels():
    ms = [64 * 2**i for i in range(7)]
    assert rg.classify(ms, [1 + 0.5 * (m / 64) ** -1 for m in ms], 1.0) == "benign"
    assert rg.classify(ms, [1 + (m / 64) ** 0.5 for m in ms], 1.0) == "catastrophic"
    assert rg.classify(ms, [2.0 + 0.01 * (-1) ** i for i, m in enumerate(ms)], 1.0) == "tempered"
    assert rg.classify(ms, [1.5, 3.0, 1.5, 3.0, 1.5, 3.0, 1.5], 1.0) == "inconsistent_nonbenign"
    assert rg.classify(ms, [1.05, 1.049, 1.048, 1.047, 1.046, 1.045, 1.044], 1.0) == "indeterminate"
    assert rg.classify(ms[:1], [2.0], 1.0) == "indeterminate"


def test_scan_deterministic():
    sch = rg.BandwidthSchedule("critical", 2.0)
    a = rg.scan(sch, "constant:1", 1.0, grid=GRID[:4], d=6)
    b = rg.scan(sch, "constant:1", 1.0, grid=GRID[:4], d=6, workers=4)
    assert a.to_dict() == b.to_dict()


def test_case2_scan_increasing():
    rep = rg.scan(rg.BandwidthSchedule("fixed", 1.0), "constant:1", 1.0,
                  grid=rg.geometric_grid(32, 7), d=4)
    tot = [p.total for p in rep.points]
    assert all(b > a for a, b in zip(tot, tot[1:]))
    assert rep.classification == "catastrophic"


@pytest.mark.parametrize("d", [4, 6])
def test_case1_near_null(d):
    rep = rg.scan(rg.BandwidthSchedule("inverse_log"), "constant:1", 1.0, grid=GRID, d=d)
    eps = [1 - (p.total - 1.0) for p in rep.points]
    assert all(e < 1 for e in eps)
    assert all(b < a for a, b in zip(eps, eps[1:]))


def test_case3_e0_bracket():
    rep = rg.scan(rg.BandwidthSchedule("critical", 2.0), "constant:1", 1.0, grid=GRID, d=6)
    assert all(1.1 <= p.e0 <= 10 for p in rep.points)


def test_corollary1_trend_small_grid():
    rep = rg.scan(rg.DimensionSchedule("polynomial", (8, 16, 32, 64), alpha=1.5), "constant:1", 1.0)
    tot = [p.total for p in rep.points]
    assert all(b < a for a, b in zip(tot, tot[1:]))
    assert rep.slope_excess < 0


def test_corollary2_above_bayes():
    rep = rg.scan(rg.DimensionSchedule("logarithmic", tuple(range(10, 15))), "zero", 1.0)
    assert min(p.total for p in rep.points) > 1.05


def test_scan_point_failure_is_recorded():
    rep = rg.scan(rg.BandwidthSchedule("fixed", 1.0), "constant:1", 1.0, grid=[1, 64], d=4)
    assert rep.points[0].failed and not rep.points[1].failed
    assert rep.classification == "indeterminate"


def test_csv_rows_shape():
    rep = rg.scan(rg.BandwidthSchedule("fixed", 1.0), "linear:1", 1.0, grid=[64, 128], d=4)
    rows = list(rep.csv_rows())
    assert len(rows) == 2 and all(len(r) == len(rg.CSV_COLUMNS) for r in rows)


def test_make_target_rules():
    assert rg.make_target("zero", 4).norm_sq == 0
    assert rg.make_target("constant:3", 4).mass == {0: 9.0}
    assert rg.make_target("linear:2", 4).mass == {1: pytest.approx(1.0)}
    with pytest.raises(ValueError):
        rg.make_target("cubic", 4)


# ----------------------------------------------------- multiplicity scaling
def test_subpolynomial_k_m():
    pts = rg.multiplicity_scaling_report(rg.DimensionSchedule("subpolynomial", (1, 2)))
    assert [p.k_m for p in pts] == [2, 5]


def test_subpolynomial_lower_index_ratio():
    pts = rg.multiplicity_scaling_report(rg.DimensionSchedule("subpolynomial", (1, 2)))
    bad = [(p.d, p.m, p.L_ratio) for p in pts if not p.checks["L_m/m_le_3/(2log m)"]]
    assert not bad, f"L_m/m above 3/(2 log m) at {bad}"


def test_log_scaling_report():
    pts = rg.multiplicity_scaling_report(rg.DimensionSchedule("logarithmic", tuple(range(10, 21))))
    for p in pts:
        assert p.passed, (p.d, p.checks)
    p20 = pts[-1]
    assert 20 / 5 <= p20.k_m <= 20 / 2


def test_smallest_sample():
    s = index_summary(4, 2)
    assert s.k_m == 0 and s.L_m == 1
