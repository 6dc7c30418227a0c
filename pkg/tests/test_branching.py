import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cellgw.branching import (
    classify,
    growth_rate_sweep,
    mean_matrix,
    mean_matrix_malpha,
    spectral,
    spectral_full,
)
from cellgw.core_model import MAlphaParams, ModelParams

from oracles import brute_force_kernel, dominant_root, malpha_inputs


@pytest.mark.parametrize("p", [0.0, 0.3, 0.5, 1.0])
def test_two_state_mean_matrix(p):
    mm = mean_matrix(MAlphaParams(2, 1, p, 1))
    np.testing.assert_allclose(mm.M_hat, [[0.5]], atol=1e-15)
    np.testing.assert_allclose(mm.M_star, [[1.0]], atol=1e-15)


@pytest.mark.parametrize("n, m, p, alpha", [(4, 1, 0.3, 1), (5, 2, 0.7, 2), (6, 1, 0.0, 1)])
def test_mean_matrix_matches_enumeration(n, m, p, alpha):
    inflow, b = malpha_inputs(n, m, alpha)
    *_, M = brute_force_kernel(n, inflow, p, b)
    np.testing.assert_allclose(mean_matrix(MAlphaParams(n, m, p, alpha)).M, np.array(M)[:n, :n], atol=1e-14)


@pytest.mark.parametrize("m, p, alpha", [(15, 0.5, 2), (30, 0.13, 3.5), (1, 0.9, 1), (45, 0.0, 5)])
def test_closed_form_mean_matrix(m, p, alpha):
    params = MAlphaParams(100, m, p, alpha)
    M = mean_matrix(params).M
    np.testing.assert_allclose(M, mean_matrix_malpha(params), atol=1e-12)
    i, j = np.indices(M.shape)
    assert np.all(M[j > i + m] == 0)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 30),
    st.lists(st.floats(0, 1), min_size=1, max_size=4).filter(lambda w: sum(w) > 0.01),
    st.floats(0, 1),
    st.data(),
)
def test_mean_matrix_symmetric_in_p(n, weights, p, data):
    q = np.array(weights) / sum(weights)
    b = data.draw(st.lists(st.floats(0, 1), min_size=n + len(q), max_size=n + len(q)))
    M1 = mean_matrix(ModelParams(n, q, p, b)).M
    M2 = mean_matrix(ModelParams(n, q, 1 - p, b)).M
    np.testing.assert_allclose(M1, M2, atol=1e-14)
    assert M1.min() >= 0
    assert M1.sum(axis=1).max() <= 2 + 1e-12


def test_no_division_mean_matrix():
    params = ModelParams(10, [0.0, 0.5, 0.0, 0.5], 0.4, [0.0])
    M = mean_matrix(params).M
    assert np.all((M > 0).sum(axis=1) <= 2)
    # each row: drift by tau, capped; senescent mass dropped
    for i in range(10):
        expected = np.zeros(10)
        for k in (1, 3):
            if i + k < 10:
                expected[i + k] += 0.5
        np.testing.assert_allclose(M[i], expected)


def test_two_state_spectral():
    res = spectral(MAlphaParams(2, 1, 0.5, 1))
    assert res.r == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(res.v, [1 / 3, 2 / 3], atol=1e-12)
    assert res.a == pytest.approx(2 / 3, abs=1e-12)
    assert res.criticality == "subcritical"


def test_criticality_regimes():
    assert spectral(MAlphaParams(100, 45, 0.5, 2)).criticality == "subcritical"
    res = spectral(MAlphaParams(100, 15, 0.5, 2))
    assert 1 < res.r < 2 and res.criticality == "supercritical"


def test_classify_band():
    assert classify(1 + 5e-10) == "critical"
    assert classify(1 - 2e-9) == "subcritical"
    assert classify(1.1) == "supercritical"


@pytest.mark.parametrize("m, p, alpha", [(15, 0.5, 2), (30, 0.2, 1), (10, 0.85, 4), (45, 0.5, 2), (3, 0.5, 1)])
def test_decomposed_matches_full(m, p, alpha):
    params = MAlphaParams(100, m, p, alpha)
    a, b = spectral(params), spectral_full(params)
    assert a.r == pytest.approx(b.r, abs=1e-8)
    np.testing.assert_allclose(a.v, b.v, atol=1e-8)
    assert abs(a.v.sum() - 1) < 1e-12
    assert abs(a.v @ a.u - 1) < 1e-10
    assert np.all(a.v >= 0)
    assert np.all(a.u[100 - m :] == 0)


@pytest.mark.parametrize("m, p, alpha", [(15, 0.5, 2), (30, 0.3, 4)])
def test_eigen_residuals(m, p, alpha):
    params = MAlphaParams(100, m, p, alpha)
    mm = mean_matrix(params)
    res = spectral(params)
    k = 100 - m
    u, v = res.u[:k] / res.u[:k].max(), res.v[:k] / res.v[:k].max()
    assert np.abs(mm.M_hat @ u - res.r * u).max() <= 1e-10
    assert np.abs(v @ mm.M_hat - res.r * v).max() <= 1e-10
    # full eigen equations, including the extended tail of v
    assert np.abs(res.v @ mm.M - res.r * res.v).max() <= 1e-10
    assert np.abs(mm.M @ res.u - res.r * res.u).max() <= 1e-10 * res.u.max()


def test_small_growth_rate_against_characteristic_polynomial():
    params = MAlphaParams(5, 1, 0.3, 2)
    assert spectral(params).r == pytest.approx(dominant_root(mean_matrix(params).M_hat), abs=1e-8)


def test_boundary_p_falls_back_with_warning():
    with pytest.warns(RuntimeWarning):
        res = spectral(MAlphaParams(100, 15, 0.0, 2))
    assert res.r == pytest.approx(spectral_full(MAlphaParams(100, 15, 1.0, 2)).r, abs=1e-9)


def test_general_params_use_full_matrix():
    params = ModelParams(6, [0.0, 0.7, 0.3], 0.4, [1.0, 0.95, 0.9, 0.8, 0.6, 0.3, 0.1, 0.05])
    res = spectral(params)
    assert res.r == pytest.approx(dominant_root(mean_matrix(params).M), abs=1e-8)
    assert abs(res.v.sum() - 1) < 1e-12


P_GRID = [round(0.1 * k, 1) for k in range(1, 10)]


@pytest.mark.parametrize("m, alpha", [(15, 2), (30, 1), (45, 2), (10, 5)])
def test_symmetry_in_p(m, alpha):
    rows = growth_rate_sweep(MAlphaParams(100, m, 0.5, alpha), "p", P_GRID)
    r = np.array([row.r for row in rows])
    a = np.array([row.a for row in rows])
    np.testing.assert_allclose(r, r[::-1], atol=1e-9)
    np.testing.assert_allclose(a, a[::-1], atol=1e-9)
    assert np.all(r < 2)
    v1 = spectral(MAlphaParams(100, m, 0.2, alpha)).v
    v2 = spectral(MAlphaParams(100, m, 0.8, alpha)).v
    np.testing.assert_allclose(v1, v2, atol=1e-9)


def test_sweep_m_non_increasing():
    rows = growth_rate_sweep(MAlphaParams(100, 15, 0.5, 2), "m", [10, 15, 20, 30, 45])
    r = [row.r for row in rows]
    assert all(x >= y for x, y in zip(r, r[1:]))


def test_sweep_alpha_non_decreasing():
    rows = growth_rate_sweep(MAlphaParams(100, 30, 0.5, 2), "alpha", [1, 2, 3, 4, 5])
    r = [row.r for row in rows]
    assert all(x <= y for x, y in zip(r, r[1:]))


def test_sweep_records_errors_and_keeps_order():
    rows = growth_rate_sweep(MAlphaParams(100, 15, 0.5, 2), "m", [10, 150, 20.5, 30], threads=3)
    assert [row.value for row in rows] == [10, 150, 20.5, 30]
    assert rows[0].error is None and rows[3].error is None
    assert rows[1].error and rows[2].error
    assert rows[1].r is None


def test_sweep_thread_count_does_not_change_rows():
    base = MAlphaParams(60, 10, 0.5, 2)
    assert growth_rate_sweep(base, "p", P_GRID, threads=1) == growth_rate_sweep(base, "p", P_GRID, threads=4)


def test_sweep_rejects_unknown_variable():
    with pytest.raises(ValueError):
        growth_rate_sweep(MAlphaParams(10, 2, 0.5, 2), "n", [10])


def test_growth_rate_monotone_grid():
    ms = [10, 15, 20, 30]
    r = {
        (m, p, a): spectral(MAlphaParams(100, m, p, a)).r
        for m, p, a in itertools.product(ms, [0.3, 0.5, 0.7], [1, 2, 3, 4, 5])
    }
    for (m, p, a), value in r.items():
        if (m, p, a + 1) in r:
            assert value <= r[m, p, a + 1]
        nxt = ms.index(m) + 1
        if nxt < len(ms):
            assert value >= r[ms[nxt], p, a]
