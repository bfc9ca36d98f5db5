"""Counter-based random streams and exact discrete samplers.

Every replication owns an independent stream whose key is derived from the
master seed and the replication index::

    root = mix64(master_seed + GOLDEN)            # avalanche the seed first
    key = mix64(root ^ index)                     # substream 0
    key = mix64(mix64(root ^ index) ^ mix64(s))   # substream s >= 1

Mixing the master seed before the XOR matters: with a raw ``seed ^ index``
the seeds 5 and 6 would share the same set of stream keys over indices
0..R-1 (merely permuted), so their campaigns would be identical in law.

Draw number ``j`` (1-based) of a stream is ``mix64(key + j * GOLDEN)``, i.e.
SplitMix64 viewed as a function of ``(key, counter)``.  Because a draw depends
only on the key and its counter, replications can run in any order or on any
number of threads and still produce bit-identical output.

``mix64`` is the SplitMix64 finalizer (Stafford's "Mix13" variant): two
xor-shift/multiply rounds and a final xor-shift, which gives full avalanche
on 64-bit inputs.

The samplers operate on a ``state`` array ``[key, counter]`` of dtype uint64
and are exact: binomial thinning uses inversion for small means and Hörmann's
BTRS transformed rejection otherwise, Poisson uses inversion or PTRS.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

INNOV_POISSON = 0
INNOV_GEOMETRIC = 1
INNOV_CATEGORICAL = 2


def mix64(z: int) -> int:
    """SplitMix64 finalizer on Python integers (reduced mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, index: int, substream: int = 0) -> int:
    """Key of replication ``index`` (and optional substream) under ``master_seed``."""
    if master_seed < 0 or master_seed > MASK64:
        raise ValueError("master_seed must be a 64-bit unsigned integer")
    if index < 0:
        raise ValueError("index must be nonnegative")
    base = mix64(mix64(master_seed + GOLDEN) ^ index)
    if substream == 0:
        return base
    return mix64(base ^ mix64(substream))


def new_state(master_seed: int, index: int = 0, substream: int = 0) -> np.ndarray:
    return np.array([stream_key(master_seed, index, substream), 0], dtype=np.uint64)


@njit(cache=True, inline="always")
def mix64_jit(z):
    z = (z ^ (z >> _S30)) * _U_MIX1
    z = (z ^ (z >> _S27)) * _U_MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def key_jit(master_seed, index, substream):
    """Same derivation as :func:`stream_key`, for use inside kernels."""
    base = mix64_jit(mix64_jit(master_seed + _U_GOLDEN) ^ np.uint64(index))
    if substream == 0:
        return base
    return mix64_jit(base ^ mix64_jit(np.uint64(substream)))


@njit(cache=True)
def next_u64(state):
    state[1] += _ONE
    return mix64_jit(state[0] + state[1] * _U_GOLDEN)


@njit(cache=True)
def next_uniform(state):
    """Uniform on the open interval (0, 1) with 53 random bits."""
    return ((next_u64(state) >> _S11) + 0.5) * _INV53


@njit(cache=True)
def normal_pair(state):
    """Two independent N(0, 1) draws by the Box-Muller transform."""
    u1 = next_uniform(state)
    u2 = next_uniform(state)
    r = math.sqrt(-2.0 * math.log(u1))
    t = 2.0 * math.pi * u2
    return r * math.cos(t), r * math.sin(t)


@njit(cache=True)
def _binomial_inversion(state, n, p):
    # p <= 0.5 and n * p < 10
    q = 1.0 - p
    s = p / q
    a = (n + 1) * s
    r = q**n
    u = next_uniform(state)
    x = 0
    while u > r:
        u -= r
        x += 1
        if x > n:
            # float round-off in the cdf tail; restart
            u = next_uniform(state)
            x = 0
            r = q**n
            continue
        r *= a / x - s
    return x


@njit(cache=True)
def _binomial_btrs(state, n, p):
    # Hörmann (1993) transformed rejection with squeeze; p <= 0.5, n * p >= 10
    q = 1.0 - p
    spq = math.sqrt(n * p * q)
    b = 1.15 + 2.53 * spq
    a = -0.0873 + 0.0248 * b + 0.01 * p
    c = n * p + 0.5
    v_r = 0.92 - 4.2 / b
    alpha = (2.83 + 5.1 / b) * spq
    lpq = math.log(p / q)
    m = math.floor((n + 1) * p)
    h = math.lgamma(m + 1.0) + math.lgamma(n - m + 1.0)
    while True:
        u = next_uniform(state) - 0.5
        v = next_uniform(state)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + c)
        if k < 0 or k > n:
            continue
        if us >= 0.07 and v <= v_r:
            return int(k)
        v = math.log(v * alpha / (a / (us * us) + b))
        if v <= h - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0) + (k - m) * lpq:
            return int(k)


@njit(cache=True)
def binomial(state, n, p):
    """Exact Bin(n, p) draw; this is the binomial thinning ``p o n``."""
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    if p > 0.5:
        return n - binomial(state, n, 1.0 - p)
    if n * p < 10.0:
        return _binomial_inversion(state, n, p)
    return _binomial_btrs(state, n, p)


@njit(cache=True)
def _poisson_ptrs(state, lam):
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = next_uniform(state) - 0.5
        v = next_uniform(state)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return int(k)


@njit(cache=True)
def poisson(state, lam):
    if lam <= 0.0:
        return 0
    if lam >= 10.0:
        return _poisson_ptrs(state, lam)
    u = next_uniform(state)
    x = 0
    p = math.exp(-lam)
    s = p
    while u > s:
        x += 1
        p *= lam / x
        s += p
        if p == 0.0 and s < u:
            u = next_uniform(state)
            x = 0
            p = math.exp(-lam)
            s = p
    return x


@njit(cache=True)
def geometric0(state, p):
    """Failures before the first success, support {0, 1, 2, ...}."""
    if p >= 1.0:
        return 0
    u = next_uniform(state)
    return int(math.floor(math.log(u) / math.log1p(-p)))


@njit(cache=True)
def categorical(state, support, cdf):
    u = next_uniform(state)
    last = cdf.shape[0] - 1
    for i in range(last):
        if u <= cdf[i]:
            return support[i]
    return support[last]


@njit(cache=True)
def innovation(state, kind, par, support, cdf):
    """One innovation draw; ``kind`` is one of the ``INNOV_*`` codes."""
    if kind == 0:
        return poisson(state, par)
    if kind == 1:
        return geometric0(state, par)
    return categorical(state, support, cdf)
