"""Posterior post-processing: co-clustering similarity, the minimum
variation-of-information partition estimate, WAIC, and histogram tables.

WAIC convention: the pointwise likelihood of subject i at draw t is the
conditional predictive ratio

    exp[ log p(full data | partition_t, lambda_t, psi_t)
         - log p(data without subject i | ...) ],

with subject i's cluster membership held at its drawn value and columns that
lose their last positive entry dropped from the reduced data. Absolute WAIC
values are therefore only comparable between models computed by this package
with the same convention; orderings are what matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .gibbs import ChainDraw, ChainOutput
from .kernels import Kernel
from .likelihood import GroupedCounts, group_suffstats

__all__ = [
    "similarity_matrix",
    "variation_of_information",
    "adjusted_rand_index",
    "vi_lower_bound",
    "MinViResult",
    "min_vi_partition",
    "waic",
    "WaicResult",
    "histogram_summaries",
    "pool_draws",
]


def pool_draws(chains: list[ChainOutput]) -> list[ChainDraw]:
    """Concatenate draws across chains in chain order."""
    out: list[ChainDraw] = []
    for chain in sorted(chains, key=lambda c: c.chain_id):
        out.extend(chain.draws)
    return out


def similarity_matrix(label_draws) -> np.ndarray:
    """Pairwise co-clustering frequencies across draws (diagonal is 1)."""
    arr = np.asarray(label_draws, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a nonempty (draws, subjects) label array")
    t, n = arr.shape
    acc = np.zeros((n, n))
    for row in arr:
        acc += row[:, None] == row[None, :]
    return acc / t


def _contingency(l1: np.ndarray, l2: np.ndarray) -> np.ndarray:
    u1, i1 = np.unique(l1, return_inverse=True)
    u2, i2 = np.unique(l2, return_inverse=True)
    table = np.zeros((len(u1), len(u2)), dtype=np.int64)
    np.add.at(table, (i1, i2), 1)
    return table


def variation_of_information(labels1, labels2) -> float:
    """VI distance between two partitions of the same subjects, in nats."""
    l1 = np.asarray(labels1, dtype=np.int64)
    l2 = np.asarray(labels2, dtype=np.int64)
    if l1.shape != l2.shape or l1.ndim != 1 or l1.size == 0:
        raise ValueError("partitions must cover one identical nonempty subject set")
    n = l1.size
    table = _contingency(l1, l2) / n
    p1 = table.sum(axis=1)
    p2 = table.sum(axis=0)
    h1 = -np.sum(p1 * np.log(p1))
    h2 = -np.sum(p2 * np.log(p2))
    nz = table > 0
    mi = np.sum(table[nz] * (np.log(table[nz]) - np.log(np.outer(p1, p2)[nz])))
    return float(max(h1 + h2 - 2.0 * mi, 0.0))


def adjusted_rand_index(labels1, labels2) -> float:
    l1 = np.asarray(labels1, dtype=np.int64)
    l2 = np.asarray(labels2, dtype=np.int64)
    table = _contingency(l1, l2)
    n = l1.size
    sum_cells = float((table * (table - 1) // 2).sum())
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    sum_a = float((a * (a - 1) // 2).sum())
    sum_b = float((b * (b - 1) // 2).sum())
    pairs = n * (n - 1) / 2
    expected = sum_a * sum_b / pairs
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0.0:
        return 1.0
    return float((sum_cells - expected) / denom)


def vi_lower_bound(labels, similarity: np.ndarray) -> float:
    """Jensen lower-bound surrogate for the expected VI of a candidate, in
    nats, computable from the similarity matrix alone."""
    z = np.asarray(labels, dtype=np.int64)
    n = z.size
    same = z[:, None] == z[None, :]
    size_own = same.sum(axis=1).astype(float)
    sim_row = similarity.sum(axis=1)
    sim_same = (similarity * same).sum(axis=1)
    return float(np.mean(np.log(size_own) + np.log(sim_row) - 2.0 * np.log(sim_same)))


@dataclass(frozen=True)
class MinViResult:
    labels: np.ndarray
    criterion: float
    expected_vi: float
    draw_index: int


def min_vi_partition(label_draws, similarity: np.ndarray | None = None) -> MinViResult:
    """Sampled partition minimizing the VI lower-bound criterion.

    Ties break toward the earliest draw. The exact expected VI of the winner
    against all draws is reported alongside the minimized criterion.
    """
    arr = np.asarray(label_draws, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("need a nonempty (draws, subjects) label array")
    if similarity is None:
        similarity = similarity_matrix(arr)
    best_idx = -1
    best_value = math.inf
    seen: set[tuple[int, ...]] = set()
    for idx, row in enumerate(arr):
        key = tuple(row.tolist())
        if key in seen:
            continue
        seen.add(key)
        value = vi_lower_bound(row, similarity)
        if value < best_value - 1e-12:
            best_value = value
            best_idx = idx
    winner = arr[best_idx]
    expected = float(
        np.mean([variation_of_information(winner, row) for row in arr])
    )
    return MinViResult(winner.copy(), best_value, expected, best_idx)


@dataclass(frozen=True)
class WaicResult:
    waic: float
    lppd: float
    p_waic: float
    pointwise: np.ndarray  # per-subject -2 * (lppd_i - p_waic_i)


def _leave_one_out_terms(
    data: GroupedCounts, kernel: Kernel, lam: float, labels: np.ndarray,
    contribs: np.ndarray, drop_mask: np.ndarray,
) -> np.ndarray:
    """log p(full) - log p(without i) for every subject, one draw."""
    grouped = data.with_groups(labels)
    sizes, suff = group_suffstats(grouped, kernel)
    k = data.k
    block_lm = np.asarray(
        kernel.log_marginal_suff(sizes.astype(float)[:, None], suff)
    )  # (d, k)
    col_lm = block_lm.sum(axis=0)
    lp0 = np.asarray(kernel.log_p_zero(np.arange(sizes.max() + 1, dtype=float)))
    p0_full = float(np.exp(np.sum(lp0[sizes])))
    out = np.empty(data.n)
    for c in range(grouped.n_groups):
        members = np.flatnonzero(labels == c)
        n_c = int(sizes[c])
        reduced = suff[c][None, :, :] - contribs[members]
        lm_red = np.asarray(
            kernel.log_marginal_suff(float(n_c - 1), reduced)
        )  # (m_c, k)
        keep = ~drop_mask[members]
        delta_cols = ((block_lm[c][None, :] - lm_red) * keep).sum(axis=1)
        delta_cols += (col_lm[None, :] * drop_mask[members]).sum(axis=1)
        z_counts = drop_mask[members].sum(axis=1)
        p0_red = p0_full * np.exp(lp0[n_c - 1] - lp0[n_c])
        out[members] = (
            z_counts * math.log(lam)
            - (_sp.gammaln(k + 1.0) - _sp.gammaln(k - z_counts + 1.0))
            + lam * (p0_full - p0_red)
            + delta_cols
        )
    return out


def waic(data: GroupedCounts, draws: list[ChainDraw], kernel: Kernel) -> WaicResult:
    """WAIC from posterior draws of (partition, lambda, psi).

    Requires the marginal model: draws from the fixed-total sampler carry no
    lambda and are rejected.
    """
    if len(draws) < 2:
        raise ValueError("WAIC needs at least two draws")
    if any(d.lam is None for d in draws):
        raise ValueError("WAIC requires draws from the marginal (random-total) model")
    contribs = kernel.contribs(data.matrix)
    colsum = data.matrix.sum(axis=0)
    drop_mask = (data.matrix == colsum[None, :]) & (data.matrix > 0)
    lppd_matrix = np.empty((len(draws), data.n))
    for t, draw in enumerate(draws):
        kern_t = kernel.with_psi([draw.psi[name] for name in kernel.psi_names])
        lppd_matrix[t] = _leave_one_out_terms(
            data, kern_t, draw.lam, draw.labels, contribs, drop_mask, 0.0
        )
    t = len(draws)
    lppd_i = _sp.logsumexp(lppd_matrix, axis=0) - math.log(t)
    p_waic_i = lppd_matrix.var(axis=0, ddof=1)
    pointwise = -2.0 * (lppd_i - p_waic_i)
    return WaicResult(
        waic=float(pointwise.sum()),
        lppd=float(lppd_i.sum()),
        p_waic=float(p_waic_i.sum()),
        pointwise=pointwise,
    )


def _pmf(values) -> dict[int, float]:
    values = np.asarray(values, dtype=np.int64)
    uniq, counts = np.unique(values, return_counts=True)
    total = counts.sum()
    return {int(v): float(c) / total for v, c in zip(uniq, counts)}


def histogram_summaries(draws: list[ChainDraw]) -> dict:
    """Plot-ready posterior tables: pmfs of cluster and unseen counts plus raw
    hyperparameter traces."""
    if not draws:
        raise ValueError("no draws to summarize")
    cluster_counts = [int(d.labels.max()) + 1 for d in draws]
    unseen = [d.n_unseen for d in draws if d.n_unseen is not None]
    lam_trace = np.array([d.lam for d in draws if d.lam is not None])
    psi_names = list(draws[0].psi.keys())
    psi_trace = {name: np.array([d.psi[name] for d in draws]) for name in psi_names}
    return {
        "cluster_count_pmf": _pmf(cluster_counts),
        "unseen_count_pmf": _pmf(unseen) if unseen else {},
        "lambda_trace": lam_trace,
        "psi_trace": psi_trace,
    }
