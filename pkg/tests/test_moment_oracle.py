import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from inar2 import moment_oracle as MO
from inar2.inar_core import (AutoregressiveParams, InnovationModel, expected_value_exact,
                             simulate, simulate_batch)
from oracles import exact_pair_law, sum_moment_by_convolution


# ---- conditional moments of M_k -------------------------------------------

def test_conditional_moment_examples(poisson2, regular_params):
    second, third = MO.conditional_moments(regular_params, poisson2, 5, 3)
    assert second == pytest.approx(3.92, rel=1e-14)
    # 0.24 (1 - 1.2) 5 + 0.24 (1 - 0.8) 3 + E(eps - 2)^3 with E(eps - 2)^3 = 2
    assert third == pytest.approx(0.24 * -0.2 * 5 + 0.24 * 0.2 * 3 + 2.0, rel=1e-12)
    for ab in ((1.0, 0.0), (0.0, 1.0)):
        s, t = MO.conditional_moments(AutoregressiveParams(*ab), poisson2, 17, 4)
        assert s == pytest.approx(2.0) and t == pytest.approx(2.0)


def test_conditional_moments_along_trajectory(poisson2, regular_params):
    t = simulate(regular_params, poisson2, 30, 1)
    second, third = MO.martingale_conditional_moments(t, regular_params, poisson2)
    assert second.shape == (30,)
    k = 10
    s, th = MO.conditional_moments(regular_params, poisson2, t.at(k - 1), t.at(k - 2))
    assert second[k - 1] == s and third[k - 1] == th


def test_conditional_draws_match_formulas(poisson2, regular_params):
    d = MO.conditional_martingale_draws(regular_params, poisson2, 5, 3, 100_000, seed=2)
    second, third = MO.conditional_moments(regular_params, poisson2, 5, 3)
    se = lambda v: v.std(ddof=1) / math.sqrt(v.size)  # noqa: E731
    assert abs(d.mean()) <= 4 * se(d)
    assert abs((d**2).mean() - second) <= 4 * se(d**2)
    assert abs((d**3).mean() - third) <= 4 * se(d**3)


def test_conditional_draws_validate_history(poisson2, regular_params):
    with pytest.raises(ValueError):
        MO.conditional_martingale_draws(regular_params, poisson2, -1, 0, 10, 1)


def test_martingale_differences_uncorrelated(poisson2, regular_params):
    X = simulate_batch(regular_params, poisson2, 40, 100_000, 3).astype(float)
    M = X[:, 2:] - 0.6 * X[:, 1:-1] - 0.4 * X[:, :-2] - 2.0
    for k, l in ((5, 6), (10, 30), (1, 39)):
        prod = M[:, k] * M[:, l]
        assert abs(prod.mean()) <= 4 * prod.std(ddof=1) / math.sqrt(prod.size)


# ---- i.i.d. sums ----------------------------------------------------------

def test_iid_sum_examples():
    assert MO.iid_sum_moments([0, 1.7], 13, 2) == pytest.approx(13 * 1.7)
    assert MO.iid_sum_moments([0, 1, 0, 3], 10, 4) == pytest.approx(300)
    for ell in range(1, 7):
        m = [0.0, 1.3, -0.4, 5.1, 2.2, 30.0][:ell]
        expected = 0.0 if ell == 1 else m[ell - 1]
        assert MO.iid_sum_moments(m, 1, ell) == pytest.approx(expected)
        raw = [0.7, 1.3, 0.4, 5.1, 2.2, 30.0]
        assert MO.iid_sum_moments(raw, 1, ell, centered=False) == pytest.approx(raw[ell - 1])


def test_iid_sum_gaussian_sixth_moment():
    # N(0, N): E S^6 = 15 N^3
    assert MO.iid_sum_moments([0, 1, 0, 3, 0, 15], 10, 6) == pytest.approx(15_000)


def test_iid_sum_validation():
    with pytest.raises(ValueError):
        MO.iid_sum_moments([0, 1, 0, 3, 0, 15, 0], 3, 7)
    with pytest.raises(ValueError):
        MO.iid_sum_moments([0.5, 1], 3, 2)
    with pytest.raises(ValueError):
        MO.iid_sum_moments([0, 1], 3, 4)
    with pytest.raises(ValueError):
        MO.iid_sum_moments([0, 1], -1, 2)


LAWS = st.sampled_from([
    ([0, 1], [0.3, 0.7]),
    ([0, 2, 5], [0.5, 0.3, 0.2]),
    ([1, 3, 4, 9], [0.1, 0.2, 0.3, 0.4]),
])


@settings(max_examples=40, deadline=None)
@given(law=LAWS, N=st.integers(1, 6), ell=st.integers(1, 6))
def test_iid_sums_match_convolution(law, N, ell):
    values, probs = law
    v, p = np.array(values, float), np.array(probs, float)
    raw = [float(np.dot(p, v**j)) for j in range(1, 7)]
    mean = raw[0]
    central = [float(np.dot(p, (v - mean) ** j)) for j in range(1, 7)]
    central[0] = 0.0
    exact_c = sum_moment_by_convolution(values, probs, N, ell, centered=True)
    exact_r = sum_moment_by_convolution(values, probs, N, ell, centered=False)
    scale = max(1.0, abs(exact_r))
    assert MO.iid_sum_moments(central, N, ell) == pytest.approx(exact_c, rel=1e-9, abs=1e-9 * scale)
    assert MO.iid_sum_moments(raw, N, ell, centered=False) == pytest.approx(exact_r, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(m=st.lists(st.floats(-5, 5), min_size=5, max_size=5), N=st.integers(0, 30),
       ell=st.integers(1, 6))
def test_centered_polynomials_equal_partition_sum(m, N, ell):
    moments = [0.0] + m
    explicit = MO.centered_sum_polynomial(moments, N, ell)
    general = MO.iid_sum_moments(moments, N, ell, centered=False)
    assert explicit == pytest.approx(general, rel=1e-9, abs=1e-9)


# ---- exact joint moments --------------------------------------------------

def test_joint_moments_first_step(poisson2, regular_params):
    t = MO.exact_joint_moments(regular_params, poisson2, 1)
    assert t.e_x[0] == 2.0
    assert t.e_xx[0] == pytest.approx(6.0)
    assert t.e_xy[0] == 0.0 and t.e_yy[0] == 0.0


@pytest.mark.parametrize("beta", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_order_one_matches_closed_form(beta):
    params = AutoregressiveParams(1 - beta, beta)
    innov = InnovationModel.poisson(2.0)
    t = MO.exact_joint_moments(params, innov, 10_000, order=1)
    closed = np.array([expected_value_exact(params, 2.0, n) for n in range(1, 10_001)])
    assert np.max(np.abs(t.e_x - closed) / closed) <= 1e-9
    assert np.isnan(t.e_xx).all()


@pytest.mark.parametrize("ab", [(0.6, 0.4), (1.0, 0.0), (0.0, 1.0), (0.25, 0.75)])
def test_order_two_matches_exact_law(ab):
    params = AutoregressiveParams(*ab)
    size, n = 60, 6
    pmf = stats.poisson.pmf(np.arange(size), 2.0)
    P = exact_pair_law(*ab, pmf, n, size)
    xs = np.arange(size)
    t = MO.exact_joint_moments(params, InnovationModel.poisson(2.0), n)
    assert t.e_xx[-1] == pytest.approx(np.sum(P.sum(1) * xs**2), rel=1e-10)
    assert t.e_xy[-1] == pytest.approx(np.sum(P * np.outer(xs, xs)), rel=1e-10)
    assert t.e_yy[-1] == pytest.approx(np.sum(P.sum(0) * xs**2), rel=1e-10)
    assert t.e_x[-1] == pytest.approx(np.sum(P.sum(1) * xs), rel=1e-10)


def test_order_two_matches_monte_carlo(poisson2, regular_params):
    t = MO.exact_joint_moments(regular_params, poisson2, 200)
    X = simulate_batch(regular_params, poisson2, 200, 100_000, 21).astype(float)
    sq = X[:, -1] ** 2
    assert abs(sq.mean() - t.e_xx[-1]) <= 4 * sq.std(ddof=1) / math.sqrt(sq.size)
    cross = X[:, -1] * X[:, -2]
    assert abs(cross.mean() - t.e_xy[-1]) <= 4 * cross.std(ddof=1) / math.sqrt(cross.size)


def test_joint_moments_table_invariants(poisson2, regular_params):
    t = MO.exact_joint_moments(regular_params, poisson2, 50)
    assert (t.e_x >= 0).all() and (t.e_xx >= 0).all() and (t.e_xy >= 0).all()
    assert np.allclose(t.e_yy[1:], t.e_xx[:-1], rtol=1e-14)
    lines = t.to_csv().splitlines()
    assert lines[0] == "n,e_x,e_xx,e_xy,e_yy"
    assert lines[1].startswith("1,2.0,")
    one = MO.exact_joint_moments(regular_params, poisson2, 2, order=1).to_csv().splitlines()
    assert one[1] == "1,2.0,,,"


def test_joint_moments_validation(poisson2, regular_params):
    with pytest.raises(ValueError):
        MO.exact_joint_moments(regular_params, poisson2, 10, order=3)
    with pytest.raises(ValueError):
        MO.exact_joint_moments(AutoregressiveParams(0.3, 0.3), poisson2, 10)
    with pytest.raises(ValueError):
        MO.exact_joint_moments(regular_params, poisson2, 0)


def test_recursion_matrices_entries(poisson2, regular_params):
    m = MO.recursion_matrices(regular_params, poisson2)
    assert np.allclose(m["A2"], [[0.36, 0.48, 0.16], [0.6, 0.4, 0], [1, 0, 0]])
    # at rho = 1, alpha (1 - alpha) = beta (1 - beta) = alpha beta
    assert np.allclose(m["B21"][0], [0.24 + 2.4, 0.24 + 1.6])
    assert np.allclose(m["B21"][1:], [[2.0, 0.0], [0.0, 0.0]])


# ---- growth and trend diagnostics -----------------------------------------

def test_growth_check_on_exact_mean(regular_params):
    grid = [2**k for k in range(5, 13)]
    vals = [expected_value_exact(regular_params, 2.0, n) for n in grid]
    fit = MO.growth_bound_check(grid, vals, 1.0)
    assert fit.slope == pytest.approx(1.0, abs=0.02) and fit.passed
    assert not MO.growth_bound_check(grid, np.array(grid, float) ** 1.3, 1.0).passed


def test_growth_check_validation():
    with pytest.raises(ValueError):
        MO.growth_bound_check([1], [1.0], 1.0)
    with pytest.raises(ValueError):
        MO.growth_bound_check([1, 2], [1.0, 0.0], 1.0)


def test_scaled_sup_rejects_small_kappa(poisson2, regular_params):
    X = simulate_batch(regular_params, poisson2, 64, 5, 1)
    with pytest.raises(ValueError):
        MO.scaled_sup_diagnostics(X, 0.4, 1, 1, 2.5, [16, 32])
    with pytest.raises(ValueError):
        MO.scaled_sup_diagnostics(X, 0.4, 0, 0, 1.0, [16, 32])


def test_scaled_sup_trivial_case(poisson2, regular_params):
    X = simulate_batch(regular_params, poisson2, 4096, 3, 1)
    grid = [2**k for k in range(6, 13)]
    r = MO.scaled_sup_diagnostics(X, 0.4, 0, 0, 1.1, grid)
    assert np.allclose(r.values, np.array(grid, float) ** -0.1)
    assert r.decreasing and r.spearman == pytest.approx(-1.0)


def test_scaled_sup_uv_decreases(poisson2, regular_params):
    X = simulate_batch(regular_params, poisson2, 4096, 400, 2)
    r = MO.scaled_sup_diagnostics(X, 0.4, 1, 1, 2.6, [2**k for k in range(6, 13)])
    assert r.decreasing


def test_xv_identity_and_diagnostics(poisson2, regular_params):
    X = simulate_batch(regular_params, poisson2, 4096, 300, 4)
    from inar2.inar_core import Trajectory
    for i in range(0, 300, 37):
        assert MO.xv_identity_gap(Trajectory(X[i], regular_params, 4)) == 0
    d = MO.xv_vv_diagnostics(X, 0.4, [2**k for k in range(6, 13)])
    assert d.xv.decreasing and d.vv.decreasing
    assert d.xv.values[-1] < d.xv.values[0] / 3


def test_empirical_curves_shapes(poisson2, regular_params):
    c = MO.empirical_moment_curves(regular_params, poisson2, [8, 4, 16], 500, 5, chunk=128)
    assert list(c.n_grid) == [4, 8, 16]
    for key in ("x", "x2", "m2", "v2", "u"):
        assert c.mean[key].shape == (3,) and (c.stderr[key] > 0).all()
    exact = [expected_value_exact(regular_params, 2.0, n) for n in (4, 8, 16)]
    assert np.all(np.abs(c.mean["x"] - exact) <= 4 * c.stderr["x"])


def test_zero_variance_innovation_matches_exact_law():
    # constant innovation 1: sigma^2 = 0, the recursion must still be exact
    params = AutoregressiveParams(0.6, 0.4)
    size, n = 30, 6
    pmf = np.zeros(size)
    pmf[1] = 1.0
    P = exact_pair_law(0.6, 0.4, pmf, n, size)
    xs = np.arange(size)
    t = MO.exact_joint_moments(params, InnovationModel.constant(1), n)
    assert t.e_x[-1] == pytest.approx(np.sum(P.sum(1) * xs), rel=1e-12)
    assert t.e_xx[-1] == pytest.approx(np.sum(P.sum(1) * xs**2), rel=1e-12)
    assert t.e_xy[-1] == pytest.approx(np.sum(P * np.outer(xs, xs)), rel=1e-12)
