"""Marginal Gibbs sampler for clustering subjects by trait profile.

Subjects are reassigned one at a time under a Pitman-Yor partition prior,
scoring each candidate cluster with the exact marginal law of the full data
under that partition. Only the terms that change are evaluated: the target
cluster's per-column block marginals (via the conjugate predictive identity)
and the global exponent through the unobserved-trait probability p0. The
fixed-total variant drops the exponent and uses the conditional law instead,
which is what makes it allocate new clusters too eagerly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel
from .likelihood import (
    GroupedCounts,
    log_conditional_from_suff,
    log_marginal_from_suff,
)
from .logmath import log_pochhammer, rng_categorical_from_logits, spawn_rngs
from .posterior import ModelHyper, PitmanYor, update_psi_mh_suff

__all__ = [
    "McmcConfig",
    "ChainDraw",
    "ChainOutput",
    "Partition",
    "canonical_labels",
    "log_eppf_pitman_yor",
    "allocation_log_weights",
    "gibbs_reassign_subject",
    "run_chain",
    "run_chains",
]

VARIANTS = ("unknown_groups", "naive_fixed_N", "known_groups")


def canonical_labels(assignment) -> np.ndarray:
    """Relabel cluster ids by first occurrence so partitions compare across runs."""
    assignment = np.asarray(assignment, dtype=np.int64)
    out = np.empty_like(assignment)
    seen: dict[int, int] = {}
    for idx, c in enumerate(assignment):
        out[idx] = seen.setdefault(int(c), len(seen))
    return out


def log_eppf_pitman_yor(sizes, sigma: float, gamma: float) -> float:
    """Log probability of a partition with the given block sizes."""
    if not (0.0 <= sigma < 1.0) or gamma <= -sigma:
        raise ValueError("require sigma in [0, 1) and gamma > -sigma")
    sizes = [int(s) for s in sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("block sizes must be positive")
    n = sum(sizes)
    d = len(sizes)
    value = -log_pochhammer(gamma + 1.0, n - 1)
    for q in range(1, d):
        value += math.log(gamma + q * sigma)
    for s in sizes:
        value += log_pochhammer(1.0 - sigma, s - 1)
    return value


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 10_000
    burn_in: int = 1_000
    thin: int = 2
    seed: int = 0
    chains: int = 1
    variant: str = "unknown_groups"
    init: str = "single"  # single | random | groups
    random_scan: bool = False
    adapt_psi: bool = True
    psi_scale: float = 0.3
    debug_checks: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.init not in ("single", "random", "groups"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.burn_in < 0 or self.iterations < self.burn_in:
            raise ValueError("need iterations >= burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")


@dataclass(frozen=True)
class ChainDraw:
    iteration: int
    labels: np.ndarray
    lam: float | None
    psi: dict[str, float]
    n_unseen: int | None
    log_lik: float


@dataclass
class ChainOutput:
    draws: list[ChainDraw]
    variant: str
    kernel: Kernel
    lam: float | None
    accept_rates: dict[str, float]
    chain_id: int = 0

    @property
    def label_matrix(self) -> np.ndarray:
        return np.array([d.labels for d in self.draws], dtype=np.int64)


class Partition:
    """Cluster assignment plus per-cluster block statistics, updated in place.

    Clusters occupy slots in fixed arrays; emptied slots are recycled
    immediately. Sizes and the count components of the statistics stay exact
    under removal and re-insertion because they are integer-valued.
    """

    def __init__(self, assignment: np.ndarray, contribs: np.ndarray):
        assignment = canonical_labels(assignment)
        n, k, suff_dim = contribs.shape
        d = int(assignment.max()) + 1 if n else 0
        capacity = max(d + 2, 4)
        self.contribs = contribs
        self.assignment = assignment.copy()
        self.sizes = np.zeros(capacity, dtype=np.int64)
        self.suff = np.zeros((capacity, k, suff_dim))
        np.add.at(self.sizes, assignment, 1)
        np.add.at(self.suff, assignment, contribs)
        self.active: list[int] = list(range(d))
        self._free: list[int] = list(range(d, capacity))

    @classmethod
    def from_labels(cls, labels, data: GroupedCounts, kernel: Kernel) -> "Partition":
        return cls(np.asarray(labels, dtype=np.int64), kernel.contribs(data.matrix))

    def copy(self) -> "Partition":
        dup = object.__new__(Partition)
        dup.contribs = self.contribs
        dup.assignment = self.assignment.copy()
        dup.sizes = self.sizes.copy()
        dup.suff = self.suff.copy()
        dup.active = list(self.active)
        dup._free = list(self._free)
        return dup

    @property
    def n_clusters(self) -> int:
        return len(self.active)

    def active_sizes(self) -> np.ndarray:
        return self.sizes[self.active]

    def active_suff(self) -> np.ndarray:
        return self.suff[self.active]

    def canonical(self) -> np.ndarray:
        return canonical_labels(self.assignment)

    def remove(self, i: int) -> None:
        c = int(self.assignment[i])
        self.assignment[i] = -1
        self.sizes[c] -= 1
        self.suff[c] -= self.contribs[i]
        if self.sizes[c] == 0:
            self.suff[c] = 0.0  # kill residue on recycled slots
            self.active.remove(c)
            self._free.append(c)

    def add(self, i: int, slot: int) -> None:
        self.assignment[i] = slot
        self.sizes[slot] += 1
        self.suff[slot] += self.contribs[i]

    def add_new(self, i: int) -> int:
        if not self._free:
            grow = max(4, len(self.sizes) // 2)
            self.sizes = np.concatenate([self.sizes, np.zeros(grow, dtype=np.int64)])
            self.suff = np.concatenate([self.suff, np.zeros((grow,) + self.suff.shape[1:])])
            self._free = list(range(len(self.sizes) - grow, len(self.sizes)))
        slot = self._free.pop()
        self.active.append(slot)
        self.assignment[i] = slot
        self.sizes[slot] = 1
        self.suff[slot] = self.contribs[i].copy()
        return slot

    def check_consistency(self) -> None:
        """Debug assertion: incremental statistics match a fresh recomputation."""
        sizes = np.zeros_like(self.sizes)
        np.add.at(sizes, self.assignment, 1)
        if not np.array_equal(sizes, self.sizes):
            raise AssertionError("cluster sizes drifted from recomputation")
        suff = np.zeros_like(self.suff)
        np.add.at(suff, self.assignment, self.contribs)
        if not np.allclose(suff, self.suff, rtol=0, atol=1e-8):
            raise AssertionError("sufficient statistics drifted from recomputation")
        if sorted(self.active) != sorted(set(self.assignment.tolist())):
            raise AssertionError("active cluster bookkeeping is stale")


class _SweepContext:
    """Per-sweep caches: p0 by block size and single-subject block marginals."""

    def __init__(self, kernel: Kernel, lam: float | None, py: PitmanYor,
                 contribs: np.ndarray, naive: bool):
        self.kernel = kernel
        self.lam = lam
        self.py = py
        self.naive = naive
        n, k, suff_dim = contribs.shape
        self.contribs = contribs
        self.log_p0 = np.asarray(kernel.log_p_zero(np.arange(n + 2, dtype=float)))
        if k:
            zero_suff = np.zeros((1, k, suff_dim))
            self.new_cluster_sum = np.asarray(
                kernel.log_predictive_suff(0.0, zero_suff, contribs)
            ).sum(axis=1)
        else:
            self.new_cluster_sum = np.zeros(n)

    def weights(self, i: int, state: Partition) -> tuple[list[int], np.ndarray]:
        """Allocation log weights for subject i, already detached from state.

        Returns candidate slot ids and the logits; the final logit is the
        new-cluster candidate.
        """
        active = state.active
        d_minus = len(active)
        logits = np.empty(d_minus + 1)
        if d_minus:
            sizes = state.sizes[active]
            pred = self.kernel.log_predictive_suff(
                sizes.astype(float)[:, None], state.suff[active],
                self.contribs[i][None, :, :],
            )
            logits[:d_minus] = np.log(sizes - self.py.sigma) + pred.sum(axis=1)
        logits[d_minus] = (
            math.log(self.py.gamma + d_minus * self.py.sigma) + self.new_cluster_sum[i]
        )
        if not self.naive:
            lp0 = self.log_p0
            if d_minus:
                sz = state.sizes[active]
                base = float(np.sum(lp0[sz]))
                logits[:d_minus] += self.lam * np.exp(base - lp0[sz] + lp0[sz + 1])
            else:
                base = 0.0
            logits[d_minus] += self.lam * math.exp(base + lp0[1])
        return active, logits


def allocation_log_weights(
    i: int,
    state: Partition,
    kernel: Kernel,
    lam: float | None,
    py: PitmanYor,
    naive: bool = False,
):
    """Candidate slots and log weights for reassigning subject i.

    Works on a copy, leaving the state untouched; the last weight belongs to
    the fresh-cluster candidate. Intended for tests and diagnostics.
    """
    scratch = state.copy()
    scratch.remove(i)
    ctx = _SweepContext(kernel, lam, py, state.contribs, naive)
    slots, logits = ctx.weights(i, scratch)
    return list(slots), logits


def _reassign(rng, i: int, state: Partition, ctx: _SweepContext) -> None:
    state.remove(i)
    slots, logits = ctx.weights(i, state)
    choice = rng_categorical_from_logits(rng, logits)
    if choice == len(slots):
        state.add_new(i)
    else:
        state.add(i, slots[choice])


def gibbs_reassign_subject(
    rng,
    i: int,
    state: Partition,
    hyper: ModelHyper,
    kernel: Kernel,
    naive: bool = False,
) -> None:
    """One full-conditional reassignment of subject i (state mutated)."""
    lam = None if naive else hyper.lam
    ctx = _SweepContext(kernel, lam, hyper.py, state.contribs, naive)
    _reassign(rng, i, state, ctx)


def _initial_assignment(config: McmcConfig, data: GroupedCounts, rng) -> np.ndarray:
    if config.variant == "known_groups" or config.init == "groups":
        return data.groups.copy()
    if config.init == "single":
        return np.zeros(data.n, dtype=np.int64)
    buckets = max(2, math.isqrt(data.n))
    return rng.integers(0, buckets, size=data.n)


def run_chain(
    data: GroupedCounts,
    kernel: Kernel,
    hyper: ModelHyper,
    config: McmcConfig,
    rng,
    chain_id: int = 0,
) -> ChainOutput:
    """Run one chain: a reassignment sweep, then lambda and psi updates.

    The observed trait count k never changes during sampling; only the number
    of unseen traits is latent. Draws are recorded after burn-in at the
    thinning interval, after the hyperparameter updates of the iteration.
    """
    naive = config.variant == "naive_fixed_N"
    update_partition = config.variant != "known_groups"
    lam: float | None = None if naive else hyper.lam
    contribs = kernel.contribs(data.matrix)
    state = Partition(_initial_assignment(config, data, rng), contribs)

    psi_scales = {name: config.psi_scale for name in kernel.psi_names}
    accept_count = {name: 0 for name in kernel.psi_names}
    accept_total = 0
    window = {name: 0 for name in kernel.psi_names}
    window_len = 50
    adapt_step = 0

    draws: list[ChainDraw] = []
    for it in range(config.iterations):
        if update_partition:
            ctx = _SweepContext(kernel, lam, hyper.py, contribs, naive)
            order = rng.permutation(data.n) if config.random_scan else range(data.n)
            for i in order:
                _reassign(rng, int(i), state, ctx)
            if config.debug_checks:
                state.check_consistency()
        sizes = state.active_sizes()
        suff = state.active_suff()
        p0 = float(np.exp(np.sum(kernel.log_p_zero(sizes.astype(float)))))
        if not naive and hyper.lam_prior is not None:
            prior = hyper.lam_prior
            lam = float(rng.gamma(prior.shape + data.k, 1.0 / (prior.rate + 1.0 - p0)))
        if hyper.psi_priors is not None:
            kernel, accepted = update_psi_mh_suff(
                rng, sizes, suff, lam, kernel, hyper.psi_priors, psi_scales,
                naive_total=data.k if naive else None,
            )
            accept_total += 1
            for name, ok in accepted.items():
                accept_count[name] += ok
                window[name] += ok
            if config.adapt_psi and it < config.burn_in and (it + 1) % window_len == 0:
                adapt_step += 1
                for name in psi_scales:
                    rate = window[name] / window_len
                    psi_scales[name] *= math.exp((rate - 0.44) / math.sqrt(adapt_step))
                    window[name] = 0
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            if naive:
                n_unseen = None
                log_lik = log_conditional_from_suff(kernel, data.k, sizes, suff)
            else:
                n_unseen = int(rng.poisson(lam * p0))
                log_lik = log_marginal_from_suff(kernel, lam, sizes, suff)
            draws.append(
                ChainDraw(
                    iteration=it,
                    labels=state.canonical(),
                    lam=lam,
                    psi=kernel.psi_dict(),
                    n_unseen=n_unseen,
                    log_lik=log_lik,
                )
            )
    rates = {
        name: (accept_count[name] / accept_total if accept_total else 0.0)
        for name in accept_count
    }
    return ChainOutput(
        draws=draws,
        variant=config.variant,
        kernel=kernel,
        lam=lam,
        accept_rates=rates,
        chain_id=chain_id,
    )


def run_chains(
    data: GroupedCounts,
    kernel: Kernel,
    hyper: ModelHyper,
    config: McmcConfig,
    threads: int = 1,
) -> list[ChainOutput]:
    """Independent chains from generators spawned off the configured seed.

    Results are ordered by chain index, so output is identical for any
    thread count.
    """
    rngs = spawn_rngs(config.seed, config.chains)
    if threads <= 1 or config.chains == 1:
        return [
            run_chain(data, kernel, hyper, config, rngs[c], chain_id=c)
            for c in range(config.chains)
        ]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(run_chain, data, kernel, hyper, config, rngs[c], c)
            for c in range(config.chains)
        ]
        return [f.result() for f in futures]
