"""Samplers for the limit laws of the scaled CLS errors in the unstable case.

Positively regular models need path functionals of the square-root diffusion

    dX_t = (mu dt + sqrt(2 alpha beta X_t^+) dW_t) / (1 + beta),   X_0 = 0,

discretised by Euler-Maruyama with full truncation on a mesh of ``m`` steps.
Stochastic integrals are left-endpoint (Ito) sums driven by the same
increments that move the path.  The decomposable and indecomposable cases
have Gaussian limits for the rho coordinate and, in the indecomposable case,
the Dickey-Fuller ratio for the beta coordinate.

Sample ``i`` of a batch with seed ``s`` draws the driving Wiener path from
stream ``(s, i, 0)`` and the independent second Wiener path from
``(s, i, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import rng
from .inar_core import Regularity

DEFAULT_MESH = 10_000
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class WienerPath:
    mesh: int
    increments: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class CirPath:
    mesh: int
    alpha: float
    beta: float
    mu: float
    values: np.ndarray
    driving: WienerPath

    def martingale(self) -> np.ndarray:
        """M_j = (1 + beta) X_j - mu j / m; zero at the origin."""
        t = np.arange(self.mesh + 1) / self.mesh
        return (1.0 + self.beta) * self.values - self.mu * t


@dataclass(frozen=True)
class LimitSample:
    value: float | np.ndarray
    case: str
    mesh: int
    seed: int
    degenerate: bool = False


@njit(cache=True)
def _fill_normals(out, state, scale):
    m = out.shape[0]
    j = 0
    while j < m:
        z1, z2 = rng.normal_pair(state)
        out[j] = scale * z1
        if j + 1 < m:
            out[j + 1] = scale * z2
        j += 2


def sample_wiener(m: int, seed: int, index: int = 0, substream: int = 0) -> WienerPath:
    """Brownian motion on the grid j/m, j = 0..m, from stream (seed, index, substream)."""
    if int(m) != m or m < 2:
        raise ValueError("mesh must be an integer >= 2")
    inc = np.empty(m)
    _fill_normals(inc, rng.new_state(seed, index, substream), 1.0 / math.sqrt(m))
    values = np.concatenate(([0.0], np.cumsum(inc)))
    return WienerPath(m, inc, values)


@njit(cache=True)
def _euler_cir(inc, alpha, beta, mu):
    m = inc.shape[0]
    x = np.zeros(m + 1)
    c = 1.0 / (1.0 + beta)
    s = 2.0 * alpha * beta
    dt = 1.0 / m
    for j in range(m):
        nxt = x[j] + c * (mu * dt + math.sqrt(s * max(x[j], 0.0)) * inc[j])
        x[j + 1] = max(nxt, 0.0)
    return x


def _check_cir(alpha, beta, mu):
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
        raise ValueError("CIR limit needs alpha, beta in (0, 1)")
    if abs(alpha + beta - 1.0) > 1e-12:
        raise ValueError("CIR limit needs alpha + beta = 1")
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")


def simulate_cir(alpha: float, beta: float, mu: float, m: int, seed: int,
                 index: int = 0, driving: WienerPath | None = None) -> CirPath:
    _check_cir(alpha, beta, mu)
    w = driving if driving is not None else sample_wiener(m, seed, index, 0)
    if w.mesh != m:
        raise ValueError("driving path mesh does not match m")
    return CirPath(m, alpha, beta, mu, _euler_cir(w.increments, alpha, beta, mu), w)


def martingale_form_numerator(alpha, beta, mu, x1, int_x):
    """int X dM written through Ito's formula.

    With M = (1 + beta) X - mu t and d[X] = 2 alpha beta X / (1 + beta)^2 dt,
    int_0^1 X dM = (1 + beta) (X_1^2 - [X]_1) / 2 - mu int_0^1 X dt.
    """
    qv = 2.0 * alpha * beta / (1.0 + beta) ** 2 * int_x
    return 0.5 * (1.0 + beta) * (x1 * x1 - qv) - mu * int_x


def rho_functionals(path: CirPath) -> tuple:
    """(Ito numerator, martingale-form numerator, int X^2) of one CIR path.

    The Ito numerator is the left-endpoint sum sqrt(2 alpha beta) sum X_j^{3/2} dW_j;
    the martingale form is :func:`martingale_form_numerator` evaluated on the path.
    """
    m = path.mesh
    x = path.values[:-1]
    num = math.sqrt(2.0 * path.alpha * path.beta) * math.fsum(x**1.5 * path.driving.increments)
    num_m = martingale_form_numerator(path.alpha, path.beta, path.mu, path.values[-1],
                                      math.fsum(x) / m)
    return num, num_m, math.fsum(x * x) / m


def limit_rho_positively_regular(alpha, beta, mu, m=DEFAULT_MESH, seed=0, index=0) -> LimitSample:
    path = simulate_cir(alpha, beta, mu, m, seed, index)
    num, _, den = rho_functionals(path)
    if den < DEGENERATE_TOL:
        return LimitSample(math.nan, Regularity.POSITIVELY_REGULAR.value, m, seed, True)
    return LimitSample(num / den, Regularity.POSITIVELY_REGULAR.value, m, seed)


def limit_ab_positively_regular(alpha, beta, mu, m=DEFAULT_MESH, seed=0, index=0) -> LimitSample:
    """sqrt(alpha (1 + beta)) int X dW~ / int X dt times (-1, 1)."""
    path = simulate_cir(alpha, beta, mu, m, seed, index)
    w2 = sample_wiener(m, seed, index, 1)
    x = path.values[:-1]
    den = math.fsum(x) / m
    if den < DEGENERATE_TOL:
        return LimitSample(np.array([math.nan, math.nan]), Regularity.POSITIVELY_REGULAR.value,
                           m, seed, True)
    ratio = math.sqrt(alpha * (1.0 + beta)) * math.fsum(x * w2.increments) / den
    return LimitSample(np.array([-ratio, ratio]), Regularity.POSITIVELY_REGULAR.value, m, seed)


def decomposable_rho_variance(mu: float, sigma: float) -> float:
    s2, m2 = sigma * sigma, mu * mu
    return 12.0 * s2 * (m2 + s2) / (m2 * (m2 + 4.0 * s2))


def decomposable_ab_scale(mu: float, sigma: float) -> float:
    return 2.0 * sigma / math.sqrt(mu * mu + 4.0 * sigma * sigma)


def indecomposable_rho_variance(mu: float, sigma: float) -> float:
    return 12.0 * sigma * sigma / (mu * mu)


def _standard_normal(seed, index, substream=0):
    z, _ = rng.normal_pair(rng.new_state(seed, index, substream))
    return z


def _check_mu(mu):
    if not mu > 0.0:
        raise ValueError("mu must be positive")


def limit_rho_decomposable(mu, sigma, seed=0, index=0) -> LimitSample:
    _check_mu(mu)
    z = _standard_normal(seed, index)
    return LimitSample(math.sqrt(decomposable_rho_variance(mu, sigma)) * z,
                       Regularity.DECOMPOSABLE.value, 0, seed)


def limit_ab_decomposable(mu, sigma, seed=0, index=0) -> LimitSample:
    _check_mu(mu)
    r = decomposable_ab_scale(mu, sigma) * _standard_normal(seed, index, 1)
    return LimitSample(np.array([-r, r]), Regularity.DECOMPOSABLE.value, 0, seed)


def limit_rho_indecomposable(mu, sigma, seed=0, index=0) -> LimitSample:
    _check_mu(mu)
    z = _standard_normal(seed, index)
    return LimitSample(math.sqrt(indecomposable_rho_variance(mu, sigma)) * z,
                       Regularity.INDECOMPOSABLE.value, 0, seed)


def dickey_fuller_sample(m=DEFAULT_MESH, seed=0, index=0) -> LimitSample:
    """int W dW / int W^2 dt with the numerator in closed form (W_1^2 - 1) / 2."""
    w = sample_wiener(m, seed, index, 1)
    den = math.fsum(w.values[:-1] ** 2) / m
    if den < DEGENERATE_TOL:
        return LimitSample(math.nan, "DickeyFuller", m, seed, True)
    return LimitSample(0.5 * (w.values[-1] ** 2 - 1.0) / den, "DickeyFuller", m, seed)


def riemann_functional(step_values, kernel, terminal) -> tuple:
    """(h(f(1)), (1/n) sum_{k=1}^n K(k/n, f(k/n), f((k-1)/n))) for f on the grid k/n."""
    f = list(step_values)
    n = len(f) - 1
    if n < 1:
        raise ValueError("need at least two grid values")
    total = math.fsum(kernel(k / n, f[k], f[k - 1]) for k in range(1, n + 1))
    return terminal(f[n]), total / n


# ---- batch kernels -------------------------------------------------------

@njit(cache=True, parallel=True)
def _cir_batch(alpha, beta, mu, m, seed, start, count):
    """Per-sample functionals of the Euler path.

    Columns: 0 Ito numerator, 1 martingale-form numerator, 2 int X^2,
    3 int X dW~, 4 int X, 5 min X, 6 X_1.
    The martingale form is :func:`martingale_form_numerator`.
    """
    out = np.empty((count, 7))
    c = 1.0 / (1.0 + beta)
    s = 2.0 * alpha * beta
    q = s / ((1.0 + beta) * (1.0 + beta))
    rs = math.sqrt(s)
    dt = 1.0 / m
    sd = math.sqrt(dt)
    for i in prange(count):
        st = np.empty(2, dtype=np.uint64)
        st[0] = rng.key_jit(seed, start + i, 0)
        st[1] = 0
        st2 = np.empty(2, dtype=np.uint64)
        st2[0] = rng.key_jit(seed, start + i, 1)
        st2[1] = 0
        x = 0.0
        num = den2 = numt = den1 = 0.0
        xmin = 0.0
        j = 0
        while j < m:
            z1, z2 = rng.normal_pair(st)
            y1, y2 = rng.normal_pair(st2)
            for h in range(2):
                if j >= m:
                    break
                dw = sd * (z1 if h == 0 else z2)
                dwt = sd * (y1 if h == 0 else y2)
                nxt = max(x + c * (mu * dt + math.sqrt(s * x) * dw), 0.0)
                num += x * math.sqrt(x) * dw
                den2 += x * x
                numt += x * dwt
                den1 += x
                x = nxt
                if x < xmin:
                    xmin = x
                j += 1
        out[i, 0] = rs * num
        out[i, 1] = 0.5 * (1.0 + beta) * (x * x - q * den1 * dt) - mu * den1 * dt
        out[i, 2] = den2 * dt
        out[i, 3] = numt
        out[i, 4] = den1 * dt
        out[i, 5] = xmin
        out[i, 6] = x
    return out


@njit(cache=True, parallel=True)
def _wiener_batch(m, seed, start, count, substream):
    """Columns: 0 Ito sum W_j dW_j, 1 closed form (W_1^2 - 1)/2, 2 int W^2, 3 W_1."""
    out = np.empty((count, 4))
    sd = math.sqrt(1.0 / m)
    for i in prange(count):
        st = np.empty(2, dtype=np.uint64)
        st[0] = rng.key_jit(seed, start + i, substream)
        st[1] = 0
        w = 0.0
        ito = den = 0.0
        j = 0
        while j < m:
            z1, z2 = rng.normal_pair(st)
            for h in range(2):
                if j >= m:
                    break
                dw = sd * (z1 if h == 0 else z2)
                ito += w * dw
                den += w * w
                w += dw
                j += 1
        out[i, 0] = ito
        out[i, 1] = 0.5 * (w * w - 1.0)
        out[i, 2] = den / m
        out[i, 3] = w
    return out


@njit(cache=True, parallel=True)
def _normal_batch(seed, start, count, substream):
    out = np.empty(count)
    for i in prange(count):
        st = np.empty(2, dtype=np.uint64)
        st[0] = rng.key_jit(seed, start + i, substream)
        st[1] = 0
        z, _ = rng.normal_pair(st)
        out[i] = z
    return out


def cir_functionals_batch(alpha, beta, mu, m, count, seed, start=0) -> np.ndarray:
    """Functionals of ``count`` Euler CIR paths; see :func:`_cir_batch` for columns."""
    _check_cir(alpha, beta, mu)
    if m < 2 or count < 1:
        raise ValueError("mesh must be >= 2 and count positive")
    return _cir_batch(float(alpha), float(beta), float(mu), int(m), np.uint64(seed),
                      int(start), int(count))


def wiener_functionals_batch(m, count, seed, start=0, substream=1) -> np.ndarray:
    if m < 2 or count < 1:
        raise ValueError("mesh must be >= 2 and count positive")
    return _wiener_batch(int(m), np.uint64(seed), int(start), int(count), int(substream))


@dataclass(frozen=True)
class LimitBatch:
    """Draws of the two limit coordinates (rho, beta) for one model class."""

    case: str
    rho: np.ndarray
    beta: np.ndarray
    mesh: int
    seed: int
    degenerate: int

    def rows(self):
        for i in range(self.rho.size):
            yield i, self.case, self.rho[i], self.beta[i], self.mesh, self.seed


def sample_limit_batch(regularity: Regularity, alpha: float, beta: float, mu: float,
                       sigma: float, count: int, seed: int, m: int = DEFAULT_MESH) -> LimitBatch:
    """``count`` draws of the limit of the scaled (rho, beta) errors.

    The beta coordinate is the second component of the limit vector on the
    line x + y = 0.  Degenerate CIR denominators are dropped and counted.
    """
    if regularity is Regularity.POSITIVELY_REGULAR:
        f = cir_functionals_batch(alpha, beta, mu, m, count, seed)
        ok = (f[:, 2] >= DEGENERATE_TOL) & (f[:, 4] >= DEGENERATE_TOL)
        rho = f[ok, 0] / f[ok, 2]
        b = math.sqrt(alpha * (1.0 + beta)) * f[ok, 3] / f[ok, 4]
        return LimitBatch(regularity.value, rho, b, m, seed, int((~ok).sum()))
    _check_mu(mu)
    if regularity is Regularity.DECOMPOSABLE:
        rho = math.sqrt(decomposable_rho_variance(mu, sigma)) * _normal_batch(np.uint64(seed), 0, count, 0)
        b = decomposable_ab_scale(mu, sigma) * _normal_batch(np.uint64(seed), 0, count, 1)
        return LimitBatch(regularity.value, rho, b, 0, seed, 0)
    rho = math.sqrt(indecomposable_rho_variance(mu, sigma)) * _normal_batch(np.uint64(seed), 0, count, 0)
    f = wiener_functionals_batch(m, count, seed, substream=1)
    ok = f[:, 2] >= DEGENERATE_TOL
    df = np.full(count, np.nan)
    df[ok] = f[ok, 1] / f[ok, 2]
    keep = ok
    return LimitBatch(regularity.value, rho[keep], df[keep], m, seed, int((~ok).sum()))


def dickey_fuller_batch(count, seed, m=DEFAULT_MESH) -> np.ndarray:
    f = wiener_functionals_batch(m, count, seed, substream=1)
    ok = f[:, 2] >= DEGENERATE_TOL
    return f[ok, 1] / f[ok, 2]
