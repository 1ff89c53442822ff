"""Posterior inference for the known-groups model.

The posterior of the trait intensities splits into two independent pieces:
conjugate updates for the parameters of each observed trait, and a thinned
Poisson law for the traits that remained unseen. The thinning factor is the
probability that a single trait is missed by every subject,

    p0 = prod_q integral P(0; theta)^{n_q} H(dtheta; psi),

so the unseen count is Poisson(lambda * p0) for fixed lambda, and negative
binomial once lambda carries its conjugate gamma hyperprior. Note the product
form: the complementary form lambda * (1 - p0), occasionally quoted for the
binary and Poisson special cases, does not match the exact conditional-law
enumeration (see tests) and is not used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special as _sp

from .kernels import BetaBernoulli, Kernel
from .likelihood import (
    GroupedCounts,
    group_suffstats,
    log_conditional_from_suff,
    log_marginal_from_suff,
)

__all__ = [
    "GammaPrior",
    "PitmanYor",
    "ModelHyper",
    "PosteriorUnseen",
    "PosteriorDraw",
    "PredictiveDraw",
    "prob_unobserved",
    "lambda_prime",
    "lambda_full_conditional",
    "unseen_count_posterior",
    "update_lambda_gibbs",
    "update_psi_mh",
    "update_psi_mh_suff",
    "sample_posterior_measures",
    "sample_predictive",
    "posterior_adjacency_expectation",
    "elicited_lambda_prior",
    "default_psi_priors",
]


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) distribution used as a hyperprior."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0.0 or self.rate <= 0.0:
            raise ValueError("gamma priors need positive shape and rate")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def log_pdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        return float(
            self.shape * math.log(self.rate)
            - _sp.gammaln(self.shape)
            + (self.shape - 1.0) * math.log(x)
            - self.rate * x
        )

    def sample(self, rng) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))


@dataclass(frozen=True)
class PitmanYor:
    """Two-parameter random partition prior; sigma = 0 is the Dirichlet process."""

    sigma: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.sigma < 1.0):
            raise ValueError("sigma must lie in [0, 1)")
        if self.gamma <= -self.sigma:
            raise ValueError("gamma must exceed -sigma")


@dataclass(frozen=True)
class ModelHyper:
    """Rate lambda for the total trait count, optional hyperpriors, and the
    partition prior used by the mixture sampler."""

    lam: float
    lam_prior: GammaPrior | None = None
    psi_priors: Mapping[str, GammaPrior] | None = None
    py: PitmanYor = field(default_factory=PitmanYor)

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lambda must be positive")


def prob_unobserved(sizes, kernel: Kernel) -> float:
    """p0: probability one trait is displayed by no subject in any group."""
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size == 0:
        return 1.0
    return float(np.exp(np.sum(kernel.log_p_zero(sizes))))


def lambda_prime(data: GroupedCounts, lam: float, kernel: Kernel) -> float:
    """Rate of the unseen-trait Poisson law: lambda * p0 (product form)."""
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    return lam * prob_unobserved(data.group_sizes, kernel)


def lambda_full_conditional(k: int, p0: float, prior: GammaPrior) -> GammaPrior:
    """Conjugate update: lambda | data ~ Gamma(shape + k, rate + 1 - p0)."""
    if not (0.0 < p0 <= 1.0):
        raise ValueError("p0 must lie in (0, 1]")
    return GammaPrior(prior.shape + k, prior.rate + 1.0 - p0)


@dataclass(frozen=True)
class PosteriorUnseen:
    """Law of the number of unseen traits given the sample.

    Poisson(lam_prime) when lambda is fixed; with a gamma hyperprior on
    lambda the marginal is negative binomial with ``size`` = shape + k and
    per-count probability ``p_count`` = p0 / (rate + 1).
    """

    p0: float
    lam_prime: float | None = None
    size: float | None = None
    p_count: float | None = None
    posterior_lambda: GammaPrior | None = None

    @property
    def mean(self) -> float:
        if self.lam_prime is not None:
            return self.lam_prime
        return self.size * self.p_count / (1.0 - self.p_count)

    def log_pmf(self, m):
        m = np.asarray(m, dtype=float)
        if self.lam_prime is not None:
            if self.lam_prime == 0.0:
                out = np.where(m == 0, 0.0, -np.inf)
            else:
                out = m * np.log(self.lam_prime) - self.lam_prime - _sp.gammaln(m + 1.0)
        else:
            out = (
                _sp.gammaln(self.size + m)
                - _sp.gammaln(self.size)
                - _sp.gammaln(m + 1.0)
                + self.size * np.log1p(-self.p_count)
                + m * np.log(self.p_count)
            )
        return float(out) if out.ndim == 0 else out

    def sample(self, rng) -> int:
        if self.lam_prime is not None:
            return int(rng.poisson(self.lam_prime))
        lam = self.posterior_lambda.sample(rng)
        return int(rng.poisson(lam * self.p0))


def unseen_count_posterior(
    data: GroupedCounts, hyper: ModelHyper, kernel: Kernel
) -> PosteriorUnseen:
    p0 = prob_unobserved(data.group_sizes, kernel)
    if hyper.lam_prior is None:
        return PosteriorUnseen(p0=p0, lam_prime=hyper.lam * p0)
    post = lambda_full_conditional(data.k, p0, hyper.lam_prior)
    return PosteriorUnseen(
        p0=p0,
        size=post.shape,
        p_count=p0 / (hyper.lam_prior.rate + 1.0),
        posterior_lambda=post,
    )


def update_lambda_gibbs(rng, k: int, p0: float, prior: GammaPrior) -> float:
    """One exact draw from the lambda full conditional."""
    return lambda_full_conditional(k, p0, prior).sample(rng)


def update_psi_mh_suff(
    rng,
    sizes,
    suff,
    lam: float,
    kernel: Kernel,
    priors: Mapping[str, GammaPrior],
    scales: Mapping[str, float],
    naive_total: int | None = None,
):
    """One componentwise log-normal random-walk sweep over psi.

    The target is the marginal likelihood (or, for the fixed-total model,
    the conditional one) times independent gamma priors; the log proposal
    Jacobian log(psi') - log(psi) enters the acceptance ratio. Returns the
    updated kernel and a per-component acceptance map.
    """

    def loglik(kern: Kernel) -> float:
        if naive_total is not None:
            return log_conditional_from_suff(kern, naive_total, sizes, suff)
        return log_marginal_from_suff(kern, lam, sizes, suff)

    current = loglik(kernel)
    accepted: dict[str, bool] = {}
    for name in kernel.psi_names:
        if name not in priors:
            accepted[name] = False
            continue
        old = float(getattr(kernel, name))
        new = old * math.exp(scales[name] * rng.standard_normal())
        proposal = kernel.with_psi(
            [new if nm == name else getattr(kernel, nm) for nm in kernel.psi_names]
        )
        try:
            new_loglik = loglik(proposal)
        except (ValueError, FloatingPointError):
            accepted[name] = False
            continue
        log_ratio = (
            new_loglik
            - current
            + priors[name].log_pdf(new)
            - priors[name].log_pdf(old)
            + math.log(new)
            - math.log(old)
        )
        if math.log(rng.random()) < log_ratio:
            kernel = proposal
            current = new_loglik
            accepted[name] = True
        else:
            accepted[name] = False
    return kernel, accepted


def update_psi_mh(
    rng,
    data: GroupedCounts,
    hyper: ModelHyper,
    kernel: Kernel,
    proposal_scale: float | Mapping[str, float] = 0.3,
    naive: bool = False,
):
    """MH sweep over psi for data under its stored grouping."""
    if hyper.psi_priors is None:
        raise ValueError("psi is fixed; nothing to update")
    if isinstance(proposal_scale, (int, float)):
        scales = {name: float(proposal_scale) for name in kernel.psi_names}
    else:
        scales = dict(proposal_scale)
    sizes, suff = group_suffstats(data, kernel)
    return update_psi_mh_suff(
        rng,
        sizes,
        suff,
        hyper.lam,
        kernel,
        hyper.psi_priors,
        scales,
        naive_total=data.k if naive else None,
    )


@dataclass(frozen=True)
class PosteriorDraw:
    """One joint draw of observed-trait parameters and the unseen remainder."""

    theta_obs: np.ndarray  # (k, d, theta_dim)
    n_unseen: int
    theta_unseen: np.ndarray  # (n_unseen, d, theta_dim)
    unseen_labels: tuple[str, ...]


def sample_posterior_measures(
    rng, data: GroupedCounts, hyper: ModelHyper, kernel: Kernel
) -> PosteriorDraw:
    sizes, suff = group_suffstats(data, kernel)
    d = data.n_groups
    theta_obs = np.zeros((data.k, d, kernel.theta_dim))
    for col in range(data.k):
        for q in range(d):
            theta_obs[col, q] = kernel.sample_posterior_theta_suff(
                rng, int(sizes[q]), suff[q, col]
            )
    n_unseen = unseen_count_posterior(data, hyper, kernel).sample(rng)
    theta_unseen = np.zeros((n_unseen, d, kernel.theta_dim))
    for j in range(n_unseen):
        for q in range(d):
            theta_unseen[j, q] = kernel.sample_unseen_theta(rng, int(sizes[q]))
    existing = set(data.labels)
    labels = []
    nxt = 0
    while len(labels) < n_unseen:
        cand = f"new{nxt}"
        nxt += 1
        if cand not in existing:
            labels.append(cand)
    return PosteriorDraw(theta_obs, n_unseen, theta_unseen, tuple(labels))


@dataclass(frozen=True)
class PredictiveDraw:
    """Counts of one additional subject per group, including traits that
    materialize only now."""

    observed_labels: tuple[str, ...]
    new_labels: tuple[str, ...]
    rows: np.ndarray  # (d, k + n_new)


def sample_predictive(
    rng, data: GroupedCounts, hyper: ModelHyper, kernel: Kernel
) -> PredictiveDraw:
    draw = sample_posterior_measures(rng, data, hyper, kernel)
    d = data.n_groups
    rows = np.zeros((d, data.k + draw.n_unseen), dtype=np.int64)
    for q in range(d):
        for col in range(data.k):
            rows[q, col] = kernel.sample_count(rng, draw.theta_obs[col, q])
        for j in range(draw.n_unseen):
            rows[q, data.k + j] = kernel.sample_count(rng, draw.theta_unseen[j, q])
    return PredictiveDraw(data.labels, draw.unseen_labels, rows)


def posterior_adjacency_expectation(
    rng,
    data: GroupedCounts,
    hyper: ModelHyper,
    kernel: Kernel,
    partition,
    draws: int,
) -> np.ndarray:
    """Monte Carlo posterior mean of the co-attendance matrix W = A A^T.

    Subjects are treated as rows of their assigned cluster; each draw samples
    (theta_obs, n_unseen, theta_unseen) and accumulates sum_l theta_l,c(i) *
    theta_l,c(i') over observed plus unseen traits. Diagonal entries hold the
    expected row degree. Binary kernel only.
    """
    if not isinstance(kernel, BetaBernoulli):
        raise ValueError("adjacency expectation is defined for the binary kernel")
    if draws < 1:
        raise ValueError("need at least one draw")
    labels = np.asarray(partition, dtype=np.int64)
    if labels.shape != (data.n,):
        raise ValueError("partition must assign one cluster per subject")
    grouped = data.with_groups(labels)
    sizes, suff = group_suffstats(grouped, kernel)
    d = grouped.n_groups
    m = suff[..., 0]  # (d, k)
    unseen = unseen_count_posterior(grouped, hyper, kernel)
    acc = np.zeros((data.n, data.n))
    n_vec = sizes.astype(float)[:, None]
    for _ in range(draws):
        theta_obs = rng.beta(kernel.a + m, kernel.b + n_vec - m)  # (d, k)
        gram = theta_obs @ theta_obs.T
        deg = theta_obs.sum(axis=1)
        n_unseen = unseen.sample(rng)
        if n_unseen:
            theta_new = rng.beta(
                kernel.a, kernel.b + n_vec, size=(d, n_unseen)
            )
            gram += theta_new @ theta_new.T
            deg += theta_new.sum(axis=1)
        w = gram[labels[:, None], labels[None, :]]
        np.fill_diagonal(w, deg[labels])
        acc += w
    return acc / draws


def elicited_lambda_prior(k: int, mean_factor: float = 1.5, var_factor: float = 10.0) -> GammaPrior:
    """Default lambda hyperprior: mean 1.5k and variance 10 times the mean."""
    if k <= 0:
        raise ValueError("elicitation needs at least one observed trait")
    mean = mean_factor * k
    var = var_factor * mean
    return GammaPrior(shape=mean**2 / var, rate=mean / var)


def default_psi_priors(kernel: Kernel) -> dict[str, GammaPrior]:
    """Diffuse gamma hyperpriors; the binary kernel centers a near 0.2 and b
    near 10 with large variances."""
    if isinstance(kernel, BetaBernoulli):
        return {"a": GammaPrior(0.1, 0.5), "b": GammaPrior(0.1, 0.01)}
    return {name: GammaPrior(1.0, 1.0) for name in kernel.psi_names}
