"""Numerically stable log-space special functions and seeded RNG helpers.

Everything downstream works in natural-log space: products over traits and
groups underflow quickly otherwise. All stochastic operations take an
explicit ``numpy.random.Generator`` so chains are bitwise reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

__all__ = [
    "log_gamma",
    "log_pochhammer",
    "log_beta_fn",
    "log_binom",
    "log_factorial",
    "log_sum_exp",
    "poisson_log_pmf",
    "make_rng",
    "spawn_rngs",
    "rng_gamma",
    "rng_beta",
    "rng_poisson",
    "rng_uniform",
    "rng_categorical_from_logits",
]


def log_gamma(x):
    """ln Gamma(x) for x > 0; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("log_gamma requires strictly positive arguments")
    out = _sp.gammaln(x)
    return float(out) if out.ndim == 0 else out


def log_pochhammer(a: float, n: int) -> float:
    """ln of the ascending factorial (a)_n = a(a+1)...(a+n-1), with (a)_0 = 1.

    Small n uses a direct log sum for accuracy at small a; large n falls back
    to a gamma-function difference.
    """
    if a <= 0.0:
        raise ValueError("log_pochhammer requires a > 0")
    if n < 0:
        raise ValueError("log_pochhammer requires n >= 0")
    if n == 0:
        return 0.0
    if n <= 30:
        return float(np.sum(np.log(a + np.arange(n))))
    return float(_sp.gammaln(a + n) - _sp.gammaln(a))


def log_beta_fn(a, b):
    """ln B(a, b) for a, b > 0; accepts scalars or arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise ValueError("log_beta_fn requires strictly positive arguments")
    out = _sp.betaln(a, b)
    return float(out) if out.ndim == 0 else out


def log_binom(n, k):
    """ln of the (generalized) binomial coefficient C(n, k)."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    out = _sp.gammaln(n + 1.0) - _sp.gammaln(k + 1.0) - _sp.gammaln(n - k + 1.0)
    return float(out) if out.ndim == 0 else out


def log_factorial(m):
    """ln m! via the gamma function; accepts scalars or arrays."""
    m = np.asarray(m, dtype=float)
    out = _sp.gammaln(m + 1.0)
    return float(out) if out.ndim == 0 else out


def log_sum_exp(values) -> float:
    """ln sum(exp(v_i)) by max-shift; -inf inputs are absorbing zeros."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty collection")
    hi = np.max(arr)
    if not np.isfinite(hi):
        if hi == -np.inf:
            return -math.inf
        raise ValueError("log_sum_exp received a non-finite positive value")
    return float(hi + np.log(np.sum(np.exp(arr - hi))))


def poisson_log_pmf(m, rate):
    """ln P(X = m) for X ~ Poisson(rate); accepts scalar or array m."""
    if rate <= 0.0:
        raise ValueError("poisson_log_pmf requires rate > 0")
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("poisson_log_pmf requires m >= 0")
    out = m * math.log(rate) - rate - _sp.gammaln(m + 1.0)
    return float(out) if out.ndim == 0 else out


def make_rng(seed) -> np.random.Generator:
    """A fresh PCG64 generator from an integer seed or SeedSequence."""
    return np.random.default_rng(seed)


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """Derive n independent generators from one seed (for parallel chains)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def rng_gamma(rng: np.random.Generator, shape: float, rate: float) -> float:
    if shape <= 0.0 or rate <= 0.0:
        raise ValueError("gamma draws require shape > 0 and rate > 0")
    return float(rng.gamma(shape, 1.0 / rate))


def rng_beta(rng: np.random.Generator, a: float, b: float) -> float:
    if a <= 0.0 or b <= 0.0:
        raise ValueError("beta draws require a > 0 and b > 0")
    return float(rng.beta(a, b))


def rng_poisson(rng: np.random.Generator, rate: float) -> int:
    if rate < 0.0:
        raise ValueError("poisson draws require rate >= 0")
    return int(rng.poisson(rate))


def rng_uniform(rng: np.random.Generator) -> float:
    return float(rng.random())


def rng_categorical_from_logits(rng: np.random.Generator, logits) -> int:
    """Sample an index proportional to exp(logits), normalizing internally."""
    arr = np.asarray(logits, dtype=float)
    if arr.size == 0:
        raise ValueError("categorical draw from empty logits")
    shifted = arr - np.max(arr)
    probs = np.exp(shifted)
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(np.searchsorted(cdf, u, side="right"))
