"""INAR(2) model: parameters, innovations, simulation and exact mean formulas.

The process is

    X_k = alpha o X_{k-1} + beta o X_{k-2} + eps_k,   k >= 1,

with binomial thinning ``o``, i.i.d. nonnegative integer innovations and the
zero start X_{-1} = X_0 = 0.  Trajectories are stored with X_{-1} at array
position 0, so ``values[k + 1] == X_k``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import rng

# Tolerance for deciding alpha + beta == 1 on decimal inputs such as 0.35/0.65.
UNIT_ROOT_TOL = 1e-12


@dataclass(frozen=True)
class AutoregressiveParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    def rho(self) -> float:
        return self.alpha + self.beta


def _truncated_raw_moments(pmf, max_order=8, rel_tol=1e-13, max_terms=1_000_000):
    """Raw moments E(eps^j), j = 1..max_order, by summing ``pmf(k)``.

    Summation stops once the latest term's contribution to the highest order
    moment drops below ``rel_tol`` relative and the pmf is decreasing.
    """
    terms = [[] for _ in range(max_order)]
    top = 0.0
    prev = -1.0
    for k in range(max_terms):
        p = pmf(k)
        for j in range(max_order):
            terms[j].append(p * float(k) ** (j + 1))
        top += terms[-1][-1]
        if k > 0 and p <= prev and terms[-1][-1] < rel_tol * top:
            break
        prev = p
    else:
        raise RuntimeError("innovation moment series did not converge")
    return [math.fsum(t) for t in terms]


class InnovationKind(str, enum.Enum):
    POISSON = "poisson"
    GEOMETRIC = "geometric"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class InnovationModel:
    """Nonnegative integer innovation law with its first eight raw moments.

    Build instances through :meth:`poisson`, :meth:`geometric` or
    :meth:`categorical`.  ``raw_moments[j - 1]`` holds E(eps^j).
    """

    kind: InnovationKind
    params: tuple
    raw_moments: tuple = field(repr=False)
    support: np.ndarray = field(repr=False, compare=False)
    cdf: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        m = self.raw_moments
        if len(m) != 8 or not all(math.isfinite(v) and v >= 0.0 for v in m):
            raise ValueError("raw moments must be 8 finite nonnegative values")
        if not m[0] > 0.0:
            raise ValueError("innovation mean must be positive (otherwise X_k = 0)")

    @classmethod
    def poisson(cls, lam: float) -> "InnovationModel":
        lam = float(lam)
        if not (lam > 0.0 and math.isfinite(lam)):
            raise ValueError(f"Poisson rate must be positive, got {lam}")
        # Touchard polynomials: E(eps^k) = sum_j S(k, j) lam^j with Stirling numbers S
        stirling = [[1]]
        for k in range(1, 9):
            prev = stirling[-1] + [0]
            stirling.append([0] + [j * prev[j] + prev[j - 1] for j in range(1, k + 1)])
        moments = [math.fsum(stirling[k][j] * lam**j for j in range(1, k + 1))
                   for k in range(1, 9)]
        return cls(InnovationKind.POISSON, (lam,), tuple(moments),
                   np.zeros(1, np.int64), np.ones(1))

    @classmethod
    def geometric(cls, p: float) -> "InnovationModel":
        """Failures before the first success: P(k) = p (1 - p)^k, k >= 0."""
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ValueError(f"geometric p must lie in (0, 1), got {p}")
        moments = _truncated_raw_moments(lambda k: p * (1.0 - p) ** k)
        moments[0] = (1.0 - p) / p
        return cls(InnovationKind.GEOMETRIC, (p,), tuple(moments),
                   np.zeros(1, np.int64), np.ones(1))

    @classmethod
    def categorical(cls, support, probs) -> "InnovationModel":
        support = np.asarray(support, dtype=np.int64)
        probs = np.asarray(probs, dtype=float)
        if support.ndim != 1 or support.shape != probs.shape or support.size == 0:
            raise ValueError("support and probs must be equal-length 1-d sequences")
        if (support < 0).any():
            raise ValueError("categorical support must be nonnegative integers")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("categorical probabilities must be nonnegative and sum to 1")
        probs = probs / probs.sum()
        moments = tuple(float(np.sum(probs * support.astype(float) ** j)) for j in range(1, 9))
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return cls(InnovationKind.CATEGORICAL, (tuple(support.tolist()), tuple(probs.tolist())),
                   moments, support, cdf)

    @classmethod
    def constant(cls, value: int) -> "InnovationModel":
        """Degenerate law at ``value``.

        A point mass at 0 violates the positive-mean requirement, so the
        zero-innovation case is only reachable through
        :func:`zero_innovation`.
        """
        return cls.categorical([value], [1.0])

    @property
    def mean(self) -> float:
        return self.raw_moments[0]

    @property
    def variance(self) -> float:
        return max(self.raw_moments[1] - self.raw_moments[0] ** 2, 0.0)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def central_moment(self, order: int) -> float:
        """E(eps - mu)^order for order <= 8, from the raw moments."""
        mu = self.mean
        raw = (1.0,) + self.raw_moments
        return sum(math.comb(order, j) * raw[j] * (-mu) ** (order - j) for j in range(order + 1))

    def kernel_args(self):
        """Arguments in the form expected by :func:`rng.innovation`."""
        if self.kind is InnovationKind.POISSON:
            return rng.INNOV_POISSON, self.params[0], self.support, self.cdf
        if self.kind is InnovationKind.GEOMETRIC:
            return rng.INNOV_GEOMETRIC, self.params[0], self.support, self.cdf
        return rng.INNOV_CATEGORICAL, 0.0, self.support, self.cdf

    def spec(self) -> str:
        """Flag form ``kind:param1,param2`` understood by :func:`parse_innovation`."""
        if self.kind is InnovationKind.CATEGORICAL:
            sup, pr = self.params
            return "categorical:" + ",".join(f"{s}={p!r}" for s, p in zip(sup, pr))
        return f"{self.kind.value}:{self.params[0]!r}"


def zero_innovation() -> InnovationModel:
    """Point mass at 0; bypasses the positive-mean check (all paths are 0)."""
    obj = object.__new__(InnovationModel)
    for name, value in (("kind", InnovationKind.CATEGORICAL), ("params", ((0,), (1.0,))),
                        ("raw_moments", (0.0,) * 8), ("support", np.zeros(1, np.int64)),
                        ("cdf", np.ones(1))):
        object.__setattr__(obj, name, value)
    return obj


def parse_innovation(text: str) -> InnovationModel:
    """Parse ``poisson:2``, ``geometric:0.4`` or ``categorical:0=0.5,3=0.5``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if not rest:
        raise ValueError(f"innovation spec {text!r} is missing parameters")
    try:
        if kind == "poisson":
            return InnovationModel.poisson(float(rest))
        if kind == "geometric":
            return InnovationModel.geometric(float(rest))
        if kind == "categorical":
            support, probs = [], []
            for item in rest.split(","):
                s, _, p = item.partition("=")
                support.append(int(s))
                probs.append(float(p))
            return InnovationModel.categorical(support, probs)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad innovation spec {text!r}: {exc}") from None
    raise ValueError(f"unknown innovation kind {kind!r}")


class Stability(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    EXPLOSIVE = "Explosive"


class Regularity(str, enum.Enum):
    POSITIVELY_REGULAR = "PositivelyRegular"
    DECOMPOSABLE = "Decomposable"
    INDECOMPOSABLE = "IndecomposableNotPositivelyRegular"


@dataclass(frozen=True)
class ModelClass:
    stability: Stability
    regularity: Regularity


def classify(params: AutoregressiveParams) -> ModelClass:
    rho = params.rho()
    if abs(rho - 1.0) <= UNIT_ROOT_TOL:
        stability = Stability.UNSTABLE
    elif rho < 1.0:
        stability = Stability.STABLE
    else:
        stability = Stability.EXPLOSIVE
    if params.beta == 0.0:
        regularity = Regularity.DECOMPOSABLE
    elif params.alpha == 0.0:
        regularity = Regularity.INDECOMPOSABLE
    else:
        regularity = Regularity.POSITIVELY_REGULAR
    return ModelClass(stability, regularity)


@dataclass(frozen=True)
class Trajectory:
    """Zero-start path; ``values[k + 1] == X_k`` for k = -1..n.

    ``params`` and ``seed`` record provenance; a path read from a file may
    carry ``params=None``.
    """

    values: np.ndarray
    params: AutoregressiveParams | None
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.size < 3:
            raise ValueError("trajectory needs X_{-1}, X_0 and at least X_1")
        if not np.issubdtype(v.dtype, np.integer):
            raise ValueError("trajectory values must be integers")
        if v[0] != 0 or v[1] != 0:
            raise ValueError("trajectories start at X_{-1} = X_0 = 0")
        if (v < 0).any():
            raise ValueError("trajectory values must be nonnegative")
        v = v.astype(np.int64, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size - 2

    @property
    def x(self) -> np.ndarray:
        """X_1..X_n."""
        return self.values[2:]

    def at(self, k: int) -> int:
        return int(self.values[k + 1])

    def to_csv(self) -> str:
        """CSV with header ``k,x`` and one row per k = -1..n."""
        lines = ["k,x"]
        lines.extend(f"{k},{int(x)}" for k, x in zip(range(-1, self.n + 1), self.values))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, params: AutoregressiveParams | None = None,
                 seed: int = 0) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if r]
        if not rows or [c.strip() for c in rows[0]] != ["k", "x"]:
            raise ValueError("trajectory CSV must start with the header k,x")
        values = []
        for expected, row in enumerate(rows[1:], start=-1):
            if len(row) != 2:
                raise ValueError(f"malformed trajectory row {row!r}")
            k, x = int(row[0]), int(row[1])
            if k != expected:
                raise ValueError(f"expected k = {expected}, found {k}")
            values.append(x)
        return cls(np.array(values, dtype=np.int64), params, seed)


@njit(cache=True)
def _fill_path(out, alpha, beta, kind, par, support, cdf, state):
    # out[0] = X_{-1}, out[1] = X_0; thinning of X_{k-1}, then X_{k-2}, then eps_k
    out[0] = 0
    out[1] = 0
    for j in range(2, out.shape[0]):
        out[j] = (rng.binomial(state, out[j - 1], alpha)
                  + rng.binomial(state, out[j - 2], beta)
                  + rng.innovation(state, kind, par, support, cdf))


@njit(cache=True, parallel=True)
def _simulate_batch(alpha, beta, kind, par, support, cdf, n, seed, start, count):
    out = np.empty((count, n + 2), dtype=np.int64)
    for i in prange(count):
        state = np.empty(2, dtype=np.uint64)
        state[0] = rng.key_jit(seed, start + i, 0)
        state[1] = 0
        _fill_path(out[i], alpha, beta, kind, par, support, cdf, state)
    return out


def _check_run(n, seed):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if int(seed) != seed or not 0 <= seed <= rng.MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")


def simulate(params: AutoregressiveParams, innovation: InnovationModel, n: int,
             seed: int, index: int = 0) -> Trajectory:
    """Simulate X_{-1..n} on the stream of replication ``index`` under ``seed``.

    ``simulate(p, e, n, s, index=i)`` is bit-identical to row ``i`` of
    ``simulate_batch(p, e, n, R, s)``.
    """
    _check_run(n, seed)
    kind, par, support, cdf = innovation.kernel_args()
    out = np.empty(n + 2, dtype=np.int64)
    _fill_path(out, params.alpha, params.beta, kind, par, support, cdf,
               rng.new_state(seed, index))
    return Trajectory(out, params, seed)


def simulate_batch(params: AutoregressiveParams, innovation: InnovationModel, n: int,
                   replications: int, seed: int, start: int = 0) -> np.ndarray:
    """Integer array of shape (replications, n + 2); row i uses stream ``start + i``."""
    _check_run(n, seed)
    if replications < 1:
        raise ValueError("replications must be positive")
    kind, par, support, cdf = innovation.kernel_args()
    return _simulate_batch(params.alpha, params.beta, kind, par, support, cdf,
                           int(n), np.uint64(seed), int(start), int(replications))


@dataclass(frozen=True)
class DerivedSequences:
    """U_0..U_n, V_0..V_n (U_0 = V_0 = 0) and M_1..M_n as float arrays."""

    U: np.ndarray
    V: np.ndarray
    M: np.ndarray


def derived_sequences(traj: Trajectory, innovation: InnovationModel) -> DerivedSequences:
    a, b = traj.params.alpha, traj.params.beta
    x = traj.values.astype(float)
    cur, lag1, lag2 = x[2:], x[1:-1], x[:-2]
    U = np.concatenate(([0.0], cur + b * lag1))
    V = np.concatenate(([0.0], cur - lag1))
    M = cur - a * lag1 - b * lag2 - innovation.mean
    return DerivedSequences(U, V, M)


def putzer_power(beta: float, k: int) -> np.ndarray:
    """A^k for A = [[1 - beta, beta], [1, 0]] via its spectral decomposition."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    c = 1.0 / (1.0 + beta)
    u = c * np.array([1.0, 1.0])
    u_t = np.array([1.0, beta])
    v = c * np.array([beta, -1.0])
    v_t = np.array([1.0, -1.0])
    return np.outer(u, u_t) + (-beta) ** k * np.outer(v, v_t)


def expected_value_exact(params: AutoregressiveParams, mu: float, n: int) -> float:
    """E(X_n) for an unstable model started at zero."""
    if classify(params).stability is not Stability.UNSTABLE:
        raise ValueError("closed-form mean requires alpha + beta = 1")
    if n < 1:
        raise ValueError("n must be positive")
    b = params.beta
    return mu * n / (1.0 + b) + mu * b * (1.0 - (-b) ** n) / (1.0 + b) ** 2
