import math

import pytest
from hypothesis import given, strategies as st

from krr_overfit import harmonics as h


def n_oracle(d, k):
    # dim of degree-k harmonic polynomials: homogeneous degree k minus degree k-2
    hom = lambda j: math.comb(j + d - 1, d - 1) if j >= 0 else 0
    return hom(k) - hom(k - 2)


@pytest.mark.parametrize("d", [2, 3, 4, 7, 20])
def test_degree_zero_and_one(d):
    assert h.multiplicity_int(d, 0) == 1
    assert h.multiplicity_int(d, 1) == d


def test_spec_examples():
    assert h.multiplicity_int(4, 2) == 9
    assert h.cumulative_int(4, 2) == 14
    assert h.cumulative_int(3, 2) == 9
    s = h.index_summary(4, 10)
    assert (s.k_m, s.L_m, s.U_m) == (1, 5, 14)
    s = h.index_summary(4, 2)
    assert (s.k_m, s.L_m, s.U_m) == (0, 1, 5)
    assert [h.invert_index(4, j) for j in (1, 5, 6)] == [0, 1, 2]


@given(st.integers(2, 40), st.integers(0, 60))
def test_multiplicity_matches_polynomial_count(d, k):
    assert h.multiplicity_int(d, k) == n_oracle(d, k)


@given(st.integers(2, 30), st.integers(0, 40))
def test_cumulative_is_running_sum(d, k):
    assert h.cumulative_int(d, k) == sum(h.multiplicity_int(d, j) for j in range(k + 1))


@given(st.integers(2, 300), st.integers(0, 300))
def test_log_multiplicity(d, k):
    assert math.isclose(h.log_multiplicity(d, k), math.log(h.multiplicity_int(d, k)),
                        rel_tol=1e-12, abs_tol=1e-12)


def test_large_counts_fall_back_to_logs():
    c = h.multiplicity(1000, 500)
    assert c.value_exact is None
    assert math.isclose(c.value_log, math.log(h.multiplicity_int(1000, 500)), rel_tol=1e-12)
    small = h.multiplicity(6, 3)
    assert small.value_exact == 50 and small.value == 50.0
    cum = h.cumulative_multiplicity(4, 2)
    assert cum.value_exact == 14


@given(st.integers(3, 25), st.integers(1, 50))
def test_multiplicity_bounds(d, k):
    lo, hi = h.multiplicity_bounds(d, k)
    n = h.multiplicity_int(d, k)
    assert lo <= n <= hi


@given(st.integers(2, 12), st.integers(2, 100_000))
def test_index_summary_straddles(d, m):
    s = h.index_summary(d, m)
    assert s.L_m < m <= s.U_m
    assert s.L_m == h.cumulative_int(d, s.k_m)
    assert s.U_m == h.cumulative_int(d, s.k_m + 1)
    assert s.N_next == h.multiplicity_int(d, s.k_m + 1)


@given(st.integers(2, 10), st.integers(0, 12))
def test_boundary_of_strict_inequality(d, k):
    m = h.cumulative_int(d, k) + 1
    assert h.index_summary(d, m).L_m == h.cumulative_int(d, k)


@given(st.integers(2, 10), st.integers(1, 5000))
def test_invert_index_consistent(d, j):
    k = h.invert_index(d, j)
    assert j <= h.cumulative_int(d, k)
    assert k == 0 or j > h.cumulative_int(d, k - 1)


@pytest.mark.parametrize("call", [
    lambda: h.multiplicity_int(1, 2),
    lambda: h.multiplicity_int(3, -1),
    lambda: h.index_summary(4, 1),
    lambda: h.invert_index(4, 0),
    lambda: h.multiplicity_bounds(4, 0),
])
def test_invalid_inputs(call):
    with pytest.raises(ValueError):
        call()
