"""Exact moment formulas for unstable INAR(2) processes and empirical growth checks.

Exact results cover the conditional moments of the martingale differences
M_k = X_k - alpha X_{k-1} - beta X_{k-2} - mu, moments of sums of i.i.d.
variables, and the joint moments of (X_n, X_{n-1}) up to order two through
the linear recursion

    E X_n^(1) = A_1 E X_{n-1}^(1) + mu_1,
    E X_n^(2) = A_2 E X_{n-1}^(2) + B_21 E X_{n-1}^(1) + mu_2,

with X^(1) = (X_n, X_{n-1}) and X^(2) = (X_n^2, X_n X_{n-1}, X_{n-1}^2).
Empirical helpers estimate moment curves on a grid of n, fit log-log growth
slopes and track scaled sums that should vanish.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
from scipy import stats

from . import rng
from .inar_core import (AutoregressiveParams, InnovationModel, Stability, classify,
                        simulate_batch)

GROWTH_SLOPE_TOL = 0.15


def _bernoulli_var(p):
    return p * (1.0 - p)


def _bernoulli_third(p):
    """E(xi - p)^3 for xi ~ Bernoulli(p)."""
    return p * (1.0 - p) * (1.0 - 2.0 * p)


def conditional_moments(params: AutoregressiveParams, innovation: InnovationModel,
                        lag1, lag2) -> tuple:
    """E(M_k^2 | F_{k-1}) and E(M_k^3 | F_{k-1}) given X_{k-1} = lag1, X_{k-2} = lag2."""
    a, b = params.alpha, params.beta
    lag1 = np.asarray(lag1, dtype=float)
    lag2 = np.asarray(lag2, dtype=float)
    second = _bernoulli_var(a) * lag1 + _bernoulli_var(b) * lag2 + innovation.variance
    third = (_bernoulli_third(a) * lag1 + _bernoulli_third(b) * lag2
             + innovation.central_moment(3))
    return second, third


def martingale_conditional_moments(traj, params: AutoregressiveParams,
                                   innovation: InnovationModel) -> tuple:
    """Arrays over k = 1..n of the conditional second and third moments of M_k."""
    v = traj.values
    return conditional_moments(params, innovation, v[1:-1], v[:-2])


@njit(cache=True, parallel=True)
def _conditional_draws(alpha, beta, kind, par, support, cdf, mu, lag1, lag2, seed, start, count):
    out = np.empty(count)
    centre = alpha * lag1 + beta * lag2 + mu
    for i in prange(count):
        st = np.empty(2, dtype=np.uint64)
        st[0] = rng.key_jit(seed, start + i, 0)
        st[1] = 0
        x = (rng.binomial(st, lag1, alpha) + rng.binomial(st, lag2, beta)
             + rng.innovation(st, kind, par, support, cdf))
        out[i] = x - centre
    return out


def conditional_martingale_draws(params: AutoregressiveParams, innovation: InnovationModel,
                                 lag1: int, lag2: int, count: int, seed: int,
                                 start: int = 0) -> np.ndarray:
    """``count`` independent redraws of M_k given the history (X_{k-1}, X_{k-2})."""
    if lag1 < 0 or lag2 < 0:
        raise ValueError("history values must be nonnegative")
    kind, par, support, cdf = innovation.kernel_args()
    return _conditional_draws(params.alpha, params.beta, kind, par, support, cdf,
                              innovation.mean, int(lag1), int(lag2), np.uint64(seed),
                              int(start), int(count))


# ---- moments of i.i.d. sums ----------------------------------------------

def _integer_partitions(n, largest=None):
    if largest is None:
        largest = n
    if n == 0:
        yield ()
        return
    for part in range(min(n, largest), 0, -1):
        for rest in _integer_partitions(n - part, part):
            yield (part,) + rest


def _falling(n, k):
    out = 1
    for i in range(k):
        out *= n - i
    return out


def _set_partition_count(parts):
    """Number of set partitions of {1..sum(parts)} with the given block sizes."""
    count = math.factorial(sum(parts))
    for p in parts:
        count //= math.factorial(p)
    for p in set(parts):
        count //= math.factorial(parts.count(p))
    return count


def _partition_moment(moments, N, ell):
    """E(zeta_1 + ... + zeta_N)^ell summed over set partitions of the ell factors.

    A partition with b blocks of sizes s_1..s_b contributes
    N (N - 1) ... (N - b + 1) prod E(zeta^{s_i}).
    """
    total = 0
    for parts in _integer_partitions(ell):
        term = _set_partition_count(parts) * _falling(N, len(parts))
        for p in parts:
            term *= moments[p - 1]
        total += term
    return total


def centered_sum_polynomial(moments, N, ell):
    """R_ell(N) = E(zeta_1 + ... + zeta_N)^ell for centered zeta, ell <= 6.

    ``moments[j - 1]`` is E(zeta^j); the first entry is ignored (taken as 0).
    """
    m2, m3, m4, m5, m6 = (list(moments) + [0.0] * 6)[1:6]
    pairs = N * (N - 1)
    if ell == 1:
        return 0.0
    if ell == 2:
        return N * m2
    if ell == 3:
        return N * m3
    if ell == 4:
        return N * m4 + 3 * m2 * m2 * pairs
    if ell == 5:
        return N * m5 + 10 * m3 * m2 * pairs
    if ell == 6:
        return (N * m6 + 15 * m4 * m2 * pairs + 10 * m3 * m3 * pairs
                + 15 * m2**3 * pairs * (N - 2))
    raise ValueError("ell must be in 1..6")


def iid_sum_moments(dist_moments, N: int, ell: int, centered: bool = True) -> float:
    """ell-th moment of a sum of N i.i.d. copies of zeta.

    ``dist_moments`` lists E(zeta^j) for j = 1, 2, ...; at least ``ell`` entries
    are needed.  With ``centered`` the first moment must be zero and the
    explicit polynomials R_2..R_6 are used; otherwise every set partition of
    the ell factors is summed.
    """
    if not 1 <= ell <= 6:
        raise ValueError("ell must be in 1..6")
    if int(N) != N or N < 0:
        raise ValueError("N must be a nonnegative integer")
    moments = list(dist_moments)
    if len(moments) < ell:
        raise ValueError(f"need moments up to order {ell}")
    if centered:
        if abs(moments[0]) > 1e-12 * max(1.0, max(abs(m) for m in moments)):
            raise ValueError("centered moments need E(zeta) = 0")
        return centered_sum_polynomial(moments, N, ell)
    return _partition_moment(moments, int(N), ell)


# ---- exact joint moments --------------------------------------------------

def recursion_matrices(params: AutoregressiveParams, innovation: InnovationModel) -> dict:
    """A_1, mu_1, A_2, B_21 and mu_2 of the first- and second-order recursions."""
    a, b, mu = params.alpha, params.beta, innovation.mean
    return {
        "A1": np.array([[a, b], [1.0, 0.0]]),
        "mu1": np.array([mu, 0.0]),
        "A2": np.array([[a * a, 2 * a * b, b * b], [a, b, 0.0], [1.0, 0.0, 0.0]]),
        "B21": np.array([[a * (1 - a) + 2 * a * mu, b * (1 - b) + 2 * b * mu],
                         [mu, 0.0], [0.0, 0.0]]),
        "mu2": np.array([innovation.raw_moments[1], 0.0, 0.0]),
    }


@dataclass(frozen=True)
class MomentTable:
    """E(X_n), E(X_n^2), E(X_n X_{n-1}), E(X_{n-1}^2) for n = 1..N.

    Second-order columns are NaN when ``order`` is 1.
    """

    order: int
    n: np.ndarray
    e_x: np.ndarray
    e_xx: np.ndarray
    e_xy: np.ndarray
    e_yy: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "e_x", "e_xx", "e_xy", "e_yy"])
        for row in zip(self.n, self.e_x, self.e_xx, self.e_xy, self.e_yy):
            w.writerow([int(row[0])] + ["" if math.isnan(v) else repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def exact_joint_moments(params: AutoregressiveParams, innovation: InnovationModel, n: int,
                        order: int = 2) -> MomentTable:
    """Iterate the moment recursion from the zero start X_0 = X_{-1} = 0."""
    if order not in (1, 2):
        raise ValueError("exact joint moments are available for order 1 and 2 only")
    if classify(params).stability is not Stability.UNSTABLE:
        raise ValueError("exact joint moments require alpha + beta = 1")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    mats = recursion_matrices(params, innovation)
    m1 = np.zeros(2)
    m2 = np.zeros(3)
    e_x = np.empty(n)
    second = np.full((n, 3), np.nan)
    for k in range(n):
        if order == 2:
            m2 = mats["A2"] @ m2 + mats["B21"] @ m1 + mats["mu2"]
            second[k] = m2
        m1 = mats["A1"] @ m1 + mats["mu1"]
        e_x[k] = m1[0]
    return MomentTable(order, np.arange(1, n + 1), e_x, second[:, 0], second[:, 1], second[:, 2])


# ---- empirical growth -----------------------------------------------------

@dataclass(frozen=True)
class GrowthFit:
    slope: float
    intercept: float
    claimed_exponent: float
    passed: bool


def growth_bound_check(n_grid, values, claimed_exponent: float,
                       tol: float = GROWTH_SLOPE_TOL) -> GrowthFit:
    """Least-squares slope of log(values) on log(n); passes if slope <= claimed + tol."""
    n_grid = np.asarray(n_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if n_grid.size < 2 or n_grid.size != values.size:
        raise ValueError("need at least two matching grid points")
    if np.any(values <= 0) or np.any(n_grid <= 0):
        raise ValueError("log-log fit needs positive values")
    slope, intercept = np.polyfit(np.log(n_grid), np.log(values), 1)
    return GrowthFit(float(slope), float(intercept), claimed_exponent,
                     bool(slope <= claimed_exponent + tol))


@dataclass(frozen=True)
class MomentCurves:
    """Monte Carlo moments at each grid point n, with standard errors."""

    n_grid: np.ndarray
    mean: dict
    stderr: dict


def _grid(n_grid):
    g = np.asarray(sorted(set(int(v) for v in n_grid)), dtype=np.int64)
    if g.size == 0 or g[0] < 1:
        raise ValueError("grid must contain positive integers")
    return g


def empirical_moment_curves(params: AutoregressiveParams, innovation: InnovationModel,
                            n_grid, replications: int, seed: int,
                            chunk: int = 2000) -> MomentCurves:
    """Estimate E X_n, E X_n^2, E M_n^2, E V_n^2 and E U_n along ``n_grid``.

    One long path per replication is simulated up to max(n_grid); X_n for a
    shorter horizon is the corresponding prefix value, which has the right
    marginal law because paths are generated forward in time.
    """
    g = _grid(n_grid)
    a, b, mu = params.alpha, params.beta, innovation.mean
    keys = ("x", "x2", "m2", "v2", "u")
    s1 = {k: np.zeros(g.size) for k in keys}
    s2 = {k: np.zeros(g.size) for k in keys}
    done = 0
    while done < replications:
        size = min(chunk, replications - done)
        X = simulate_batch(params, innovation, int(g[-1]), size, seed, start=done)
        cur = X[:, g + 1].astype(float)
        lag1 = X[:, g].astype(float)
        lag2 = X[:, g - 1].astype(float)
        stats_now = {
            "x": cur,
            "x2": cur * cur,
            "m2": (cur - a * lag1 - b * lag2 - mu) ** 2,
            "v2": (cur - lag1) ** 2,
            "u": cur + b * lag1,
        }
        for k in keys:
            s1[k] += stats_now[k].sum(axis=0)
            s2[k] += (stats_now[k] ** 2).sum(axis=0)
        done += size
    mean = {k: s1[k] / replications for k in keys}
    var = {k: np.maximum(s2[k] / replications - mean[k] ** 2, 0.0) for k in keys}
    se = {k: np.sqrt(var[k] / replications) for k in keys}
    return MomentCurves(g, mean, se)


# ---- scaled sums ----------------------------------------------------------

@dataclass(frozen=True)
class TrendReport:
    n_grid: np.ndarray
    values: np.ndarray
    spearman: float
    decreasing: bool


def _uv(X, beta):
    X = np.asarray(X, dtype=float)
    cur, lag1 = X[:, 2:], X[:, 1:-1]
    return cur + beta * lag1, cur - lag1


def _trend(g, vals):
    rho = float(stats.spearmanr(g, vals).statistic) if np.ptp(vals) > 0 else 0.0
    return TrendReport(g, vals, rho, bool(rho < 0))


def scaled_sup_diagnostics(X, beta: float, i: int, j: int, kappa: float, n_grid) -> TrendReport:
    """Mean over trajectories of n^{-kappa} sum_{k<=n} |U_k^i V_k^j| along ``n_grid``.

    ``X`` holds trajectories row-wise as X_{-1..N}.  The sum is required to
    vanish only for kappa > i + j / 2 + 1, so smaller kappa is rejected.
    """
    if not kappa > i + j / 2 + 1:
        raise ValueError("kappa must exceed i + j/2 + 1")
    g = _grid(n_grid)
    X = np.atleast_2d(X)
    if g[-1] > X.shape[1] - 2:
        raise ValueError("grid exceeds trajectory length")
    U, V = _uv(X, beta)
    terms = np.abs(U**i * V**j)
    cums = np.cumsum(terms, axis=1)[:, g - 1]
    vals = (cums / g.astype(float) ** kappa).mean(axis=0)
    return _trend(g, vals)


@dataclass(frozen=True)
class XVDiagnostics:
    """Mean absolute values of the two scaled sums that vanish in the positively regular case."""

    n_grid: np.ndarray
    xv: TrendReport
    vv: TrendReport


def xv_vv_diagnostics(X, beta: float, n_grid) -> XVDiagnostics:
    """n^{-5/2} sum X_k V_k and n^{-2}(sum V_k^2 - 2 beta / (1 + beta) sum X_{k-1})."""
    g = _grid(n_grid)
    X = np.atleast_2d(X)
    if g[-1] > X.shape[1] - 2:
        raise ValueError("grid exceeds trajectory length")
    Xf = np.asarray(X, dtype=float)
    cur, lag1 = Xf[:, 2:], Xf[:, 1:-1]
    v = cur - lag1
    xv = np.cumsum(cur * v, axis=1)[:, g - 1] / g.astype(float) ** 2.5
    vv = (np.cumsum(v * v, axis=1)[:, g - 1]
          - 2.0 * beta / (1.0 + beta) * np.cumsum(lag1, axis=1)[:, g - 1]) / g.astype(float) ** 2
    return XVDiagnostics(g, _trend(g, np.abs(xv).mean(axis=0)), _trend(g, np.abs(vv).mean(axis=0)))


def xv_identity_gap(traj) -> int:
    """sum X_k V_k - (X_n^2 + sum V_k^2) / 2 computed in integers, times 2."""
    x = [int(v) for v in traj.values[1:]]
    xv = sum(x[k] * (x[k] - x[k - 1]) for k in range(1, len(x)))
    vv = sum((x[k] - x[k - 1]) ** 2 for k in range(1, len(x)))
    return 2 * xv - (x[-1] ** 2 + vv)

