"""Conditional least squares estimation of (alpha, beta) and (rho, beta).

Design sums are accumulated in exact integer arithmetic.  The 2x2 system is
solved with the adjugate formula in exact rational arithmetic (the innovation
mean is a binary float, hence an exact rational), so the returned estimates
are correctly rounded.  The canonical-form route A^{-1} b is computed
separately in floating point and serves as a consistency check.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit, prange

from .inar_core import (
    AutoregressiveParams,
    InnovationModel,
    ModelClass,
    Regularity,
    Stability,
    Trajectory,
)


class EstimateCase(str, enum.Enum):
    REGULAR = "Regular"
    DEGENERATE_LAST_ONLY = "DegenerateLastOnly"
    UNDEFINED = "Undefined"


@dataclass(frozen=True)
class DesignAccumulators:
    """Design sums over k = 1..n with x_{-1} = x_0 = 0.

    Integer sums are kept as Python ints.  ``d`` needs the true parameters
    and is ``None`` when they were not supplied.
    """

    n: int
    s11: int        # sum x_{k-1}^2
    s12: int        # sum x_{k-1} x_{k-2}
    s22: int        # sum x_{k-2}^2
    c1: int         # sum x_k x_{k-1}
    c2: int         # sum x_k x_{k-2}
    l1: int         # sum x_{k-1}
    l2: int         # sum x_{k-2}
    mu: float
    d: tuple | None = None

    @property
    def sum_sq_lag2(self) -> int:
        return self.s22

    @property
    def F(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s12, self.s22]], dtype=float)

    @property
    def F_int(self) -> tuple:
        return ((self.s11, self.s12), (self.s12, self.s22))

    @property
    def det_F(self) -> int:
        return self.s11 * self.s22 - self.s12 * self.s12

    @property
    def g_exact(self) -> tuple:
        mu = Fraction(self.mu)
        return (self.c1 - mu * self.l1, self.c2 - mu * self.l2)

    @property
    def g(self) -> np.ndarray:
        return np.array([float(v) for v in self.g_exact])

    @property
    def A_int(self) -> tuple:
        """T F T^T with T = [[1, 0], [-1, 1]]: entries sum X^2, -sum X V, sum V^2."""
        a12 = self.s12 - self.s11
        a22 = self.s11 - 2 * self.s12 + self.s22
        return ((self.s11, a12), (a12, a22))

    @property
    def A(self) -> np.ndarray:
        return np.array(self.A_int, dtype=float)

    @property
    def b(self) -> np.ndarray:
        g1, g2 = self.g_exact
        return np.array([float(g1), float(g2 - g1)])


def _sums(x):
    """Integer design sums of x_1..x_n (Python ints)."""
    x = [int(v) for v in x]
    lag1 = [0] + x[:-1]
    lag2 = [0, 0] + x[:-2]
    return (
        sum(a * a for a in lag1), sum(a * b for a, b in zip(lag1, lag2)),
        sum(b * b for b in lag2), sum(c * a for c, a in zip(x, lag1)),
        sum(c * b for c, b in zip(x, lag2)), sum(lag1), sum(lag2),
    )


def accumulate_design(traj: Trajectory, innovation: InnovationModel,
                      true_params: AutoregressiveParams | None = None) -> DesignAccumulators:
    """Exact design sums.

    The martingale sums ``d`` need the true parameters, taken from
    ``true_params`` or else ``traj.params``; without either ``d`` is None.
    """
    x = traj.x
    s = _sums(x)
    p = true_params or traj.params
    mu = innovation.mean
    if p is None:
        return DesignAccumulators(traj.n, *s, mu=mu, d=None)
    xf = traj.values.astype(float)
    cur, lag1, lag2 = xf[2:], xf[1:-1], xf[:-2]
    M = cur - p.alpha * lag1 - p.beta * lag2 - mu
    d = (math.fsum(M * lag1), -math.fsum(M * (lag1 - lag2)))
    return DesignAccumulators(traj.n, *s, mu=mu, d=d)


@dataclass(frozen=True)
class EstimateResult:
    alpha_hat: float
    beta_hat: float
    rho_hat: float
    case: EstimateCase
    accumulators: DesignAccumulators

    @property
    def n(self) -> int:
        return self.accumulators.n

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None or not math.isfinite(v) else v
        return {
            "alpha_hat": num(self.alpha_hat),
            "beta_hat": num(self.beta_hat),
            "rho_hat": num(self.rho_hat),
            "case": self.case.value,
            "n": self.n,
            "det_F": self.accumulators.det_F,
            "sum_sq_lag2": self.accumulators.sum_sq_lag2,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def solve_from_sums(n, s11, s12, s22, c1, c2, l1, l2, mu, last, before_last):
    """Case flag and (alpha_hat, beta_hat) from integer sums.

    ``last`` and ``before_last`` are x_n and x_{n-1}, needed for the
    degenerate branch.
    """
    if s22 > 0:
        det = s11 * s22 - s12 * s12
        if det == 0:
            return EstimateCase.UNDEFINED, math.nan, math.nan
        m = Fraction(mu)
        g1 = c1 - m * l1
        g2 = c2 - m * l2
        a = (s22 * g1 - s12 * g2) / det
        b = (s11 * g2 - s12 * g1) / det
        return EstimateCase.REGULAR, a, b
    if before_last != 0:
        return EstimateCase.DEGENERATE_LAST_ONLY, (Fraction(last) - Fraction(mu)) / before_last, Fraction(0)
    return EstimateCase.UNDEFINED, math.nan, math.nan


def estimate_cls(traj: Trajectory, innovation: InnovationModel) -> EstimateResult:
    """CLS estimate of (alpha, beta); rho_hat = alpha_hat + beta_hat.

    On x_1 = ... = x_{n-2} = 0 != x_{n-1} the beta coordinate is not
    identified and is fixed to 0; when x_1 = ... = x_{n-1} = 0 the result is
    flagged Undefined with NaN estimates.
    """
    if traj.n < 3:
        raise ValueError("estimate_cls needs n >= 3")
    acc = accumulate_design(traj, innovation)
    case, a, b = solve_from_sums(acc.n, acc.s11, acc.s12, acc.s22, acc.c1, acc.c2,
                                 acc.l1, acc.l2, acc.mu, traj.at(traj.n), traj.at(traj.n - 1))
    if case is EstimateCase.UNDEFINED:
        return EstimateResult(math.nan, math.nan, math.nan, case, acc)
    a, b = float(a), float(b)
    return EstimateResult(a, b, a + b, case, acc)


class UndefinedEstimate(ValueError):
    """Raised when the (rho, beta) estimator does not exist for the sample."""


def estimate_rho_beta(traj: Trajectory, innovation: InnovationModel) -> tuple:
    """(rho_hat, beta_hat) = A^{-1} b from the canonical-form design."""
    acc = accumulate_design(traj, innovation)
    if acc.sum_sq_lag2 == 0 or acc.det_F == 0:
        raise UndefinedEstimate("sum of squared second lags is zero")
    (a11, a12), (_, a22) = acc.A_int
    det = a11 * a22 - a12 * a12
    b1, b2 = acc.b
    return (a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det


def objective_q(traj: Trajectory, alpha_prime: float, beta_prime: float,
                innovation: InnovationModel) -> float:
    """Sum of squared one-step prediction errors at (alpha', beta')."""
    x = traj.values.astype(float)
    r = x[2:] - alpha_prime * x[1:-1] - beta_prime * x[:-2] - innovation.mean
    return math.fsum(r * r)


def scaled_error_statistics(result: EstimateResult, n: int, true_params: AutoregressiveParams,
                            model_class: ModelClass) -> np.ndarray:
    """Case-specific normalised estimation errors of (rho, beta)."""
    if model_class.stability is not Stability.UNSTABLE:
        raise ValueError("scaled statistics are only defined for unstable models")
    if result.case is not EstimateCase.REGULAR:
        raise ValueError(f"estimate is {result.case.value}, not Regular")
    return scale_errors(result.rho_hat - 1.0, result.beta_hat, n, true_params.beta,
                        model_class.regularity)


def scale_errors(rho_err, beta_hat, n, beta, regularity):
    """Vectorised core of :func:`scaled_error_statistics`."""
    rho_err = np.asarray(rho_err, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if regularity is Regularity.POSITIVELY_REGULAR:
        return np.array([n * rho_err, math.sqrt(n) * (beta_hat - beta)])
    if regularity is Regularity.DECOMPOSABLE:
        return np.array([n**1.5 * rho_err, math.sqrt(n) * beta_hat])
    return np.array([n**1.5 * rho_err, n * (beta_hat - 1.0)])


_DESIGN_SCALES = {
    # (diagonal for A, diagonal for d)
    Regularity.POSITIVELY_REGULAR: ((-1.5, -1.0), (-2.0, -1.5)),
    Regularity.DECOMPOSABLE: ((-1.5, -0.5), (-1.5, -0.5)),
    Regularity.INDECOMPOSABLE: ((-1.5, -1.0), (-1.5, -1.0)),
}


def scaled_design_statistics(accum: DesignAccumulators, n: int, model_class: ModelClass):
    """(diag_A A_n diag_A, diag_d d_n) with the case-specific powers of n."""
    if model_class.stability is not Stability.UNSTABLE:
        raise ValueError("scaled design statistics are only defined for unstable models")
    if accum.d is None:
        raise ValueError("accumulators carry no martingale sums d")
    pa, pd = _DESIGN_SCALES[model_class.regularity]
    da = np.diag([float(n) ** pa[0], float(n) ** pa[1]])
    dd = np.array([float(n) ** pd[0], float(n) ** pd[1]])
    return da @ accum.A @ da, dd * np.asarray(accum.d)


def ar1_ols_statistic(y) -> float:
    """n (rho_hat - 1) with rho_hat = sum y_{k-1} y_k / sum y_{k-1}^2 and y_0 = 0.

    ``y`` holds y_1..y_n.  Returns NaN when the denominator vanishes.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 2:
        raise ValueError("need at least two observations")
    lag = np.concatenate(([0.0], y[:-1]))
    den = math.fsum(lag * lag)
    if den == 0.0:
        return math.nan
    num = math.fsum(lag * (y - lag))
    return n * num / den


def existence_fraction(batch) -> float:
    """Share of trajectories whose sum of squared second lags is positive.

    ``batch`` is an iterable of :class:`Trajectory` or a 2-d integer array of
    rows X_{-1..n}.
    """
    if isinstance(batch, np.ndarray):
        rows = batch
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValueError("batch must be a nonempty 2-d array")
        return float(np.mean((rows[:, :-2] != 0).any(axis=1)))
    flags = [bool((t.values[:-2] != 0).any()) for t in batch]
    if not flags:
        raise ValueError("batch must be nonempty")
    return sum(flags) / len(flags)


@njit(cache=True, parallel=True)
def _batch_sums(X):
    R = X.shape[0]
    out = np.zeros((R, 7), dtype=np.int64)
    for r in prange(R):
        s11 = s12 = s22 = c1 = c2 = l1 = l2 = 0
        for j in range(2, X.shape[1]):
            x, a, b = X[r, j], X[r, j - 1], X[r, j - 2]
            s11 += a * a
            s12 += a * b
            s22 += b * b
            c1 += x * a
            c2 += x * b
            l1 += a
            l2 += b
        out[r, 0] = s11
        out[r, 1] = s12
        out[r, 2] = s22
        out[r, 3] = c1
        out[r, 4] = c2
        out[r, 5] = l1
        out[r, 6] = l2
    return out


def case_mask(cases, case: EstimateCase) -> np.ndarray:
    """Boolean mask of the entries of an ``estimate_batch`` case array equal to ``case``."""
    return np.fromiter((c is case for c in cases), dtype=bool, count=len(cases))


def estimate_batch(X: np.ndarray, mu: float):
    """Estimates for every row of a simulated batch.

    Returns ``(cases, alpha_hat, beta_hat, rho_minus_one)``; the last entry is
    computed exactly before rounding so that large scalings of rho_hat - 1 do
    not amplify cancellation.
    """
    n = X.shape[1] - 2
    if int(X.max(initial=0)) ** 2 * max(n, 1) >= 2**62:
        raise OverflowError("values too large for int64 design sums")
    sums = _batch_sums(X)
    R = X.shape[0]
    cases = np.empty(R, dtype=object)
    a_hat = np.full(R, np.nan)
    b_hat = np.full(R, np.nan)
    rho_err = np.full(R, np.nan)
    for r in range(R):
        s = [int(v) for v in sums[r]]
        case, a, b = solve_from_sums(n, *s, mu, int(X[r, -1]), int(X[r, -2]))
        cases[r] = case
        if case is not EstimateCase.UNDEFINED:
            a_hat[r] = float(a)
            b_hat[r] = float(b)
            rho_err[r] = float(a + b - 1)
    return cases, a_hat, b_hat, rho_err
