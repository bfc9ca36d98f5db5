"""Seeded Monte Carlo campaigns comparing scaled CLS errors with their limit laws.

A campaign simulates R trajectories on streams (seed, 0..R-1), estimates
(rho, beta) on each, scales the errors for the model class and compares each
coordinate with draws from the matching limit law through the two-sample
Kolmogorov-Smirnov distance and a quantile table.  Limit draws use a master
seed derived from the campaign seed so that they never share random streams
with the trajectories.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng
from .cls_estimator import EstimateCase, case_mask, estimate_batch, existence_fraction, scale_errors
from .inar_core import (AutoregressiveParams, InnovationModel, ModelClass, Stability,
                        classify, simulate, simulate_batch)
from .limit_laws import DEFAULT_MESH, sample_limit_batch

QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
MAX_UNDEFINED_SHARE = 0.05
LIMIT_SUBSTREAM = 0x4C494D4954  # separates limit-law draws from trajectory streams
_CHUNK_CELLS = 20_000_000


class CampaignAborted(RuntimeError):
    """Too many replications had no CLS estimate."""


@dataclass(frozen=True)
class CampaignConfig:
    params: AutoregressiveParams
    innovation: InnovationModel
    n: int
    replications: int
    master_seed: int
    mesh: int = DEFAULT_MESH
    limit_replications: int = 10_000
    threads: int | None = None
    model_class: ModelClass = field(init=False)

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 100:
            raise ValueError("replications must be an integer >= 100")
        if int(self.n) != self.n or self.n < 10:
            raise ValueError("n must be an integer >= 10")
        if self.limit_replications < 1:
            raise ValueError("limit_replications must be positive")
        if self.mesh < 2:
            raise ValueError("mesh must be >= 2")
        if not 0 <= self.master_seed <= rng.MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be positive")
        cls = classify(self.params)
        if cls.stability is not Stability.UNSTABLE:
            raise ValueError(f"campaigns need an unstable model, got {cls.stability.value}")
        object.__setattr__(self, "model_class", cls)

    @property
    def limit_seed(self) -> int:
        return rng.stream_key(self.master_seed, 0, LIMIT_SUBSTREAM)

    def to_dict(self) -> dict:
        return {
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "innovation": self.innovation.spec(),
            "n": int(self.n),
            "replications": int(self.replications),
            "master_seed": int(self.master_seed),
            "mesh": int(self.mesh),
            "limit_replications": int(self.limit_replications),
            "stability": self.model_class.stability.value,
            "regularity": self.model_class.regularity.value,
        }


def ks_distance(sample_a, sample_b) -> float:
    """Sup-norm distance between two empirical CDFs by a merge scan over the sorted samples."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ValueError("both samples must be nonempty")
    if np.isnan(a).any() or np.isnan(b).any():
        raise ValueError("samples must not contain NaN")
    i = j = 0
    best = 0.0
    while i < na and j < nb:
        v = min(a[i], b[j])
        while i < na and a[i] == v:
            i += 1
        while j < nb and b[j] == v:
            j += 1
        best = max(best, abs(i / na - j / nb))
    return best


@dataclass(frozen=True)
class CoordinateComparison:
    name: str
    ks_distance: float
    empirical_quantiles: tuple
    limit_quantiles: tuple
    empirical_mean: float
    empirical_variance: float
    limit_mean: float
    limit_variance: float

    def to_dict(self) -> dict:
        levels = [f"{q:g}" for q in QUANTILE_LEVELS]
        return {
            "name": self.name,
            "ks_distance": self.ks_distance,
            "quantiles": {
                "levels": levels,
                "empirical": list(self.empirical_quantiles),
                "limit": list(self.limit_quantiles),
            },
            "mean": {"empirical": self.empirical_mean, "limit": self.limit_mean},
            "variance": {"empirical": self.empirical_variance, "limit": self.limit_variance},
        }


def compare_samples(name, empirical, limit) -> CoordinateComparison:
    empirical = np.asarray(empirical, dtype=float)
    limit = np.asarray(limit, dtype=float)
    return CoordinateComparison(
        name,
        ks_distance(empirical, limit),
        tuple(float(v) for v in np.quantile(empirical, QUANTILE_LEVELS)),
        tuple(float(v) for v in np.quantile(limit, QUANTILE_LEVELS)),
        float(empirical.mean()),
        float(empirical.var(ddof=1)),
        float(limit.mean()),
        float(limit.var(ddof=1)),
    )


@dataclass(frozen=True)
class ComparisonReport:
    config: dict
    coordinates: tuple
    undefined_count: int
    degenerate_estimate_count: int
    degenerate_count: int

    def coordinate(self, name) -> CoordinateComparison:
        for c in self.coordinates:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "coordinates": [c.to_dict() for c in self.coordinates],
            "undefined_count": self.undefined_count,
            "degenerate_estimate_count": self.degenerate_estimate_count,
            "degenerate_count": self.degenerate_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class CampaignResult:
    """Scaled statistics of the Regular replications and the comparison report.

    ``statistics`` has shape (R_regular, 2) with columns (rho coordinate,
    beta coordinate); ``replication`` gives the stream index of each row.
    """

    replication: np.ndarray
    statistics: np.ndarray
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    report: ComparisonReport

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "stat1", "stat2"])
        for r, (s1, s2) in zip(self.replication, self.statistics):
            w.writerow([int(r), repr(float(s1)), repr(float(s2))])
        return buf.getvalue()


def _simulate_rows(config: CampaignConfig, serial: bool):
    R, n = config.replications, config.n
    if serial:
        rows = np.empty((R, n + 2), dtype=np.int64)
        for i in range(R):
            rows[i] = simulate(config.params, config.innovation, n, config.master_seed, i).values
        yield 0, rows
        return
    chunk = max(1, _CHUNK_CELLS // (n + 2))
    for start in range(0, R, chunk):
        size = min(chunk, R - start)
        yield start, simulate_batch(config.params, config.innovation, n, size,
                                    config.master_seed, start=start)


def estimate_replications(config: CampaignConfig, serial: bool = False):
    """Per-replication (case, alpha_hat, beta_hat, rho_hat - 1) for the whole campaign."""
    parts = [estimate_batch(rows, config.innovation.mean)
             for _, rows in _simulate_rows(config, serial)]
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))


def run_campaign(config: CampaignConfig, serial: bool = False) -> CampaignResult:
    """Simulate, estimate, scale and compare against limit-law draws.

    ``serial`` simulates replication by replication instead of through the
    parallel batch kernel; both routes yield identical statistics.
    """
    previous = numba.get_num_threads()
    if config.threads is not None:
        numba.set_num_threads(min(config.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        cases, a_hat, b_hat, rho_err = estimate_replications(config, serial)
        regular = case_mask(cases, EstimateCase.REGULAR)
        undefined = int(case_mask(cases, EstimateCase.UNDEFINED).sum())
        if undefined > MAX_UNDEFINED_SHARE * config.replications:
            raise CampaignAborted(
                f"{undefined} of {config.replications} replications have no CLS estimate; "
                "increase n")
        cls = config.model_class
        stats = scale_errors(rho_err[regular], b_hat[regular], config.n, config.params.beta,
                             cls.regularity).T
        mu, sigma = config.innovation.mean, config.innovation.sigma
        limit = sample_limit_batch(cls.regularity, config.params.alpha, config.params.beta,
                                   mu, sigma, config.limit_replications, config.limit_seed,
                                   config.mesh)
    finally:
        numba.set_num_threads(previous)
    coords = (compare_samples("rho", stats[:, 0], limit.rho),
              compare_samples("beta", stats[:, 1], limit.beta))
    degenerate_est = int(case_mask(cases, EstimateCase.DEGENERATE_LAST_ONLY).sum())
    report = ComparisonReport(config.to_dict(), coords, undefined, degenerate_est,
                              limit.degenerate)
    return CampaignResult(np.flatnonzero(regular), stats, a_hat[regular], b_hat[regular], report)


def existence_sweep(params: AutoregressiveParams, innovation: InnovationModel, n_grid,
                    replications: int, seed: int) -> dict:
    """Share of replications with a unique CLS estimate at each n of ``n_grid``.

    Paths are simulated once up to max(n_grid); the estimate at a shorter
    horizon only depends on the prefix.
    """
    if classify(params).stability is not Stability.UNSTABLE:
        raise ValueError("existence sweep needs an unstable model")
    grid = sorted(set(int(v) for v in n_grid))
    if not grid or grid[0] < 1:
        raise ValueError("grid must contain positive integers")
    X = simulate_batch(params, innovation, grid[-1], replications, seed)
    return {n: existence_fraction(X[:, : n + 2]) for n in grid}


def skewness_zscore(sample) -> float:
    """Sample skewness divided by its standard error under normality."""
    x = np.asarray(sample, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError("need at least three observations")
    c = x - x.mean()
    m2 = np.mean(c * c)
    if m2 == 0.0:
        return 0.0
    skew = np.mean(c**3) / m2**1.5
    se = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    return float(skew / se)
