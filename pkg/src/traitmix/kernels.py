"""Conjugate trait-count families.

A kernel bundles a count distribution P(. ; theta) with a conjugate mixing
prior H(. ; psi) and exposes the handful of closed-form quantities the rest
of the package needs:

* the log marginal probability of a block of counts (one trait within one
  group), integrated over theta;
* the log probability that a trait stays unobserved in n subjects;
* posterior / prior / unseen-trait draws of theta;
* the pointwise log pmf and forward sampling of a count.

Blocks are summarized by additive sufficient statistics so that samplers can
update them incrementally: ``contribs`` maps a count matrix to per-entry
contribution vectors, and block statistics are plain sums of those rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special as _sp

__all__ = [
    "ColumnCounts",
    "BetaBernoulli",
    "GammaPoisson",
    "ZiSnb",
    "Kernel",
    "make_kernel",
    "KERNEL_NAMES",
]


@dataclass(frozen=True)
class ColumnCounts:
    """Counts of one trait within one group, with cached totals."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be nonnegative integers")

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def m(self) -> int:
        return int(sum(self.counts))

    @property
    def occupied(self) -> int:
        return int(sum(1 for c in self.counts if c > 0))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


def _as_counts_array(counts) -> np.ndarray:
    if isinstance(counts, ColumnCounts):
        return counts.as_array()
    arr = np.asarray(counts, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("a column block must be one-dimensional")
    if np.any(arr < 0):
        raise ValueError("counts must be nonnegative integers")
    return arr


class _KernelBase:
    """Shared scalar conveniences implemented on top of the array API."""

    def suff_from_counts(self, counts) -> np.ndarray:
        arr = _as_counts_array(counts)
        if arr.size == 0:
            return np.zeros(self.suff_dim)
        return self.contribs(arr[None, :]).sum(axis=0)[0]

    def log_marginal_block(self, counts) -> float:
        """ln of the block marginal  integral prod_i P(a_i; theta) H(dtheta)."""
        arr = _as_counts_array(counts)
        return float(self.log_marginal_suff(arr.size, self.suff_from_counts(arr)))

    def sample_posterior_theta(self, rng, counts) -> np.ndarray:
        arr = _as_counts_array(counts)
        return self.sample_posterior_theta_suff(rng, arr.size, self.suff_from_counts(arr))

    def sample_prior_theta(self, rng) -> np.ndarray:
        return self.sample_unseen_theta(rng, 0)

    def psi_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in self.psi_names}

    def with_psi(self, values) -> "Kernel":
        return replace(self, **{name: float(v) for name, v in zip(self.psi_names, values)})


@dataclass(frozen=True)
class BetaBernoulli(_KernelBase):
    """Bernoulli counts with a Beta(a, b) prior on the success probability.

    The (a, b) shapes correspond to (-alpha, alpha + beta) in the signed
    convention sometimes used for feature models; ``from_alpha_beta``
    converts from that parameterization.
    """

    a: float
    b: float

    name = "bernoulli"
    suff_dim = 1
    theta_dim = 1
    psi_names = ("a", "b")

    def __post_init__(self):
        if self.a <= 0.0 or self.b <= 0.0:
            raise ValueError("BetaBernoulli requires a > 0 and b > 0")

    @classmethod
    def from_alpha_beta(cls, alpha: float, beta: float) -> "BetaBernoulli":
        if alpha >= 0.0 or beta <= -alpha:
            raise ValueError("signed convention requires alpha < 0 and beta > -alpha")
        return cls(a=-alpha, b=alpha + beta)

    def validate_matrix(self, matrix: np.ndarray) -> None:
        if not np.isin(matrix, (0, 1)).all():
            raise ValueError("bernoulli kernel requires binary entries")

    def contribs(self, matrix: np.ndarray) -> np.ndarray:
        self.validate_matrix(matrix)
        return matrix[..., None].astype(float)

    def log_marginal_suff(self, n, suff):
        m = np.asarray(suff, dtype=float)[..., 0]
        n = np.asarray(n, dtype=float)
        return _sp.betaln(self.a + m, self.b + n - m) - _sp.betaln(self.a, self.b)

    def log_p_zero(self, n):
        n = np.asarray(n, dtype=float)
        out = _sp.betaln(self.a, self.b + n) - _sp.betaln(self.a, self.b)
        return float(out) if out.ndim == 0 else out

    def log_predictive_suff(self, n, suff, contrib):
        m = np.asarray(suff, dtype=float)[..., 0]
        x = np.asarray(contrib, dtype=float)[..., 0]
        n = np.asarray(n, dtype=float)
        denom = np.log(self.a + self.b + n)
        return np.where(x > 0.0, np.log(self.a + m), np.log(self.b + n - m)) - denom

    def sample_posterior_theta_suff(self, rng, n, suff) -> np.ndarray:
        m = float(np.asarray(suff, dtype=float)[..., 0])
        return np.array([rng.beta(self.a + m, self.b + n - m)])

    def sample_unseen_theta(self, rng, n: int) -> np.ndarray:
        return np.array([rng.beta(self.a, self.b + n)])

    def log_pmf(self, theta, x: int) -> float:
        p = float(np.asarray(theta).reshape(-1)[0])
        if x == 0:
            return float(np.log1p(-p))
        if x == 1:
            return float(np.log(p))
        raise ValueError("bernoulli support is {0, 1}")

    def sample_count(self, rng, theta) -> int:
        p = float(np.asarray(theta).reshape(-1)[0])
        return int(rng.random() < p)


@dataclass(frozen=True)
class GammaPoisson(_KernelBase):
    """Poisson counts with a Gamma(alpha, beta) prior (rate beta) on the mean."""

    alpha: float
    beta: float

    name = "poisson"
    suff_dim = 2
    theta_dim = 1
    psi_names = ("alpha", "beta")

    def __post_init__(self):
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("GammaPoisson requires alpha > 0 and beta > 0")

    def validate_matrix(self, matrix: np.ndarray) -> None:
        if np.any(matrix < 0):
            raise ValueError("poisson kernel requires nonnegative integer entries")

    def contribs(self, matrix: np.ndarray) -> np.ndarray:
        self.validate_matrix(matrix)
        a = matrix.astype(float)
        return np.stack([a, _sp.gammaln(a + 1.0)], axis=-1)

    def log_marginal_suff(self, n, suff):
        suff = np.asarray(suff, dtype=float)
        m, logfact = suff[..., 0], suff[..., 1]
        n = np.asarray(n, dtype=float)
        return (
            self.alpha * np.log(self.beta)
            + _sp.gammaln(self.alpha + m)
            - _sp.gammaln(self.alpha)
            - (self.alpha + m) * np.log(self.beta + n)
            - logfact
        )

    def log_p_zero(self, n):
        n = np.asarray(n, dtype=float)
        out = self.alpha * (np.log(self.beta) - np.log(self.beta + n))
        return float(out) if out.ndim == 0 else out

    def log_predictive_suff(self, n, suff, contrib):
        m = np.asarray(suff, dtype=float)[..., 0]
        contrib = np.asarray(contrib, dtype=float)
        x, logfact = contrib[..., 0], contrib[..., 1]
        n = np.asarray(n, dtype=float)
        return (
            _sp.gammaln(self.alpha + m + x)
            - _sp.gammaln(self.alpha + m)
            + (self.alpha + m) * np.log(self.beta + n)
            - (self.alpha + m + x) * np.log(self.beta + n + 1.0)
            - logfact
        )

    def sample_posterior_theta_suff(self, rng, n, suff) -> np.ndarray:
        m = float(np.asarray(suff, dtype=float)[..., 0])
        return np.array([rng.gamma(self.alpha + m, 1.0 / (self.beta + n))])

    def sample_unseen_theta(self, rng, n: int) -> np.ndarray:
        return np.array([rng.gamma(self.alpha, 1.0 / (self.beta + n))])

    def log_pmf(self, theta, x: int) -> float:
        if x < 0:
            raise ValueError("poisson support is the nonnegative integers")
        mean = float(np.asarray(theta).reshape(-1)[0])
        return float(x * np.log(mean) - mean - _sp.gammaln(x + 1.0))

    def sample_count(self, rng, theta) -> int:
        mean = float(np.asarray(theta).reshape(-1)[0])
        return int(rng.poisson(mean))


@dataclass(frozen=True)
class ZiSnb(_KernelBase):
    """Zero-inflated shifted negative binomial counts.

    A trait is expressed with probability w (zero-inflation weight); when
    expressed, the count is 1 + NegativeBinomial(c, p). The number-of-trials
    parameter c stays fixed; w and p carry independent Beta(a_w, b_w) and
    Beta(a_p, b_p) priors, so theta = (w, p).
    """

    c: float
    a_w: float
    b_w: float
    a_p: float
    b_p: float

    name = "zisnb"
    suff_dim = 3
    theta_dim = 2
    psi_names = ("a_w", "b_w", "a_p", "b_p")

    def __post_init__(self):
        if min(self.c, self.a_w, self.b_w, self.a_p, self.b_p) <= 0.0:
            raise ValueError("ZiSnb requires strictly positive parameters")

    def validate_matrix(self, matrix: np.ndarray) -> None:
        if np.any(matrix < 0):
            raise ValueError("zisnb kernel requires nonnegative integer entries")

    def _log_shift_binom(self, a: np.ndarray) -> np.ndarray:
        # ln C(a + c - 2, a - 1) for a > 1; zero elsewhere (C(. , 0) = 1).
        out = np.zeros_like(a, dtype=float)
        big = a > 1
        if np.any(big):
            ab = a[big].astype(float)
            out[big] = (
                _sp.gammaln(ab + self.c - 1.0)
                - _sp.gammaln(ab)
                - _sp.gammaln(self.c)
            )
        return out

    def contribs(self, matrix: np.ndarray) -> np.ndarray:
        self.validate_matrix(matrix)
        a = matrix.astype(float)
        occupied = (a > 0).astype(float)
        return np.stack([occupied, a, self._log_shift_binom(matrix)], axis=-1)

    def log_marginal_suff(self, n, suff):
        suff = np.asarray(suff, dtype=float)
        occ, total, logbinom = suff[..., 0], suff[..., 1], suff[..., 2]
        n = np.asarray(n, dtype=float)
        return (
            logbinom
            + _sp.betaln(self.a_p + self.c * occ, self.b_p + total - occ)
            - _sp.betaln(self.a_p, self.b_p)
            + _sp.betaln(self.a_w + occ, self.b_w + n - occ)
            - _sp.betaln(self.a_w, self.b_w)
        )

    def log_p_zero(self, n):
        n = np.asarray(n, dtype=float)
        out = _sp.betaln(self.a_w, self.b_w + n) - _sp.betaln(self.a_w, self.b_w)
        return float(out) if out.ndim == 0 else out

    def log_predictive_suff(self, n, suff, contrib):
        suff = np.asarray(suff, dtype=float)
        contrib = np.asarray(contrib, dtype=float)
        occ, total = suff[..., 0], suff[..., 1]
        x_occ, x, x_logbinom = contrib[..., 0], contrib[..., 1], contrib[..., 2]
        n = np.asarray(n, dtype=float)
        w_part = np.where(
            x_occ > 0.0,
            np.log(self.a_w + occ),
            np.log(self.b_w + n - occ),
        ) - np.log(self.a_w + self.b_w + n)
        # p-part only moves when the new entry is positive.
        p_new = _sp.betaln(
            self.a_p + self.c * (occ + x_occ), self.b_p + total + x - occ - x_occ
        ) - _sp.betaln(self.a_p + self.c * occ, self.b_p + total - occ)
        return w_part + np.where(x_occ > 0.0, p_new, 0.0) + x_logbinom

    def sample_posterior_theta_suff(self, rng, n, suff) -> np.ndarray:
        suff = np.asarray(suff, dtype=float)
        occ, total = float(suff[..., 0]), float(suff[..., 1])
        w = rng.beta(self.a_w + occ, self.b_w + n - occ)
        p = rng.beta(self.a_p + self.c * occ, self.b_p + total - occ)
        return np.array([w, p])

    def sample_unseen_theta(self, rng, n: int) -> np.ndarray:
        w = rng.beta(self.a_w, self.b_w + n)
        p = rng.beta(self.a_p, self.b_p)
        return np.array([w, p])

    def log_pmf(self, theta, x: int) -> float:
        if x < 0:
            raise ValueError("zisnb support is the nonnegative integers")
        w, p = (float(v) for v in np.asarray(theta).reshape(-1)[:2])
        if x == 0:
            return float(np.log1p(-w))
        return float(
            np.log(w)
            + _sp.gammaln(x + self.c - 1.0)
            - _sp.gammaln(x)
            - _sp.gammaln(self.c)
            + self.c * np.log(p)
            + (x - 1) * np.log1p(-p)
        )

    def sample_count(self, rng, theta) -> int:
        w, p = (float(v) for v in np.asarray(theta).reshape(-1)[:2])
        if rng.random() >= w:
            return 0
        return 1 + int(rng.negative_binomial(self.c, p))


Kernel = BetaBernoulli | GammaPoisson | ZiSnb

KERNEL_NAMES = ("bernoulli", "poisson", "zisnb")


def make_kernel(name: str, **params) -> Kernel:
    """Build a kernel by CLI name; bernoulli accepts (a, b) or (alpha, beta)."""
    if name == "bernoulli":
        if "alpha" in params or "beta" in params:
            if not {"alpha", "beta"} <= params.keys() or {"a", "b"} & params.keys():
                raise ValueError("bernoulli takes either (a, b) or (alpha, beta)")
            return BetaBernoulli.from_alpha_beta(params["alpha"], params["beta"])
        return BetaBernoulli(a=params["a"], b=params["b"])
    if name == "poisson":
        return GammaPoisson(alpha=params["alpha"], beta=params["beta"])
    if name == "zisnb":
        return ZiSnb(
            c=params["c"],
            a_w=params["a_w"],
            b_w=params["b_w"],
            a_p=params["a_p"],
            b_p=params["b_p"],
        )
    raise ValueError(f"unknown kernel {name!r}")
