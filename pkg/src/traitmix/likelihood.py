"""Exact marginal laws of a grouped trait-count matrix.

``log_marginal_likelihood`` evaluates the probability that the sample shows
exactly the observed traits with the observed counts, marginalizing over the
Poisson(lambda) total number of traits. ``log_conditional_likelihood`` is the
same law conditional on the total; the marginal is its Poisson mixture, which
``log_poisson_mixture`` verifies by truncated summation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel
from .logmath import log_binom, log_factorial, log_sum_exp, poisson_log_pmf

__all__ = [
    "GroupedCounts",
    "group_suffstats",
    "log_marginal_from_suff",
    "log_conditional_from_suff",
    "log_marginal_likelihood",
    "log_conditional_likelihood",
    "log_poisson_mixture",
]


@dataclass(frozen=True)
class GroupedCounts:
    """An n x k matrix of trait counts plus a group assignment of the rows.

    Every column must contain at least one positive entry (a trait with no
    positive count is, by definition, not observed). Group ids are dense
    integers 0..d-1; ``n_groups`` may exceed the ids present only when some
    trailing groups are empty (useful for prior-predictive edge cases).
    """

    matrix: np.ndarray
    groups: np.ndarray
    labels: tuple[str, ...]
    subjects: tuple[str, ...]
    n_groups: int

    def __post_init__(self):
        matrix = np.ascontiguousarray(self.matrix, dtype=np.int64)
        groups = np.ascontiguousarray(self.groups, dtype=np.int64)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "groups", groups)
        if matrix.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        if np.any(matrix < 0):
            raise ValueError("matrix entries must be nonnegative integers")
        n, k = matrix.shape
        if groups.shape != (n,):
            raise ValueError("groups must assign one group per subject")
        if self.n_groups < 1:
            raise ValueError("need at least one group")
        if n and (groups.min() < 0 or groups.max() >= self.n_groups):
            raise ValueError("group ids must lie in [0, n_groups)")
        if len(self.labels) != k:
            raise ValueError("one label per column required")
        if len(set(self.labels)) != k:
            raise ValueError("trait labels must be distinct")
        if len(self.subjects) != n:
            raise ValueError("one subject id per row required")
        if len(set(self.subjects)) != n:
            raise ValueError("subject ids must be distinct")
        if k and n and np.any(matrix.sum(axis=0) == 0):
            bad = [self.labels[j] for j in np.flatnonzero(matrix.sum(axis=0) == 0)]
            raise ValueError(f"column {bad[0]!r} has no positive entry")
        if k and n == 0:
            raise ValueError("cannot observe traits without subjects")
        matrix.flags.writeable = False
        groups.flags.writeable = False

    @classmethod
    def create(cls, matrix, groups=None, labels=None, subjects=None, n_groups=None):
        matrix = np.asarray(matrix, dtype=np.int64)
        if matrix.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        n, k = matrix.shape
        if groups is None:
            groups = np.zeros(n, dtype=np.int64)
        groups = np.asarray(groups, dtype=np.int64)
        if labels is None:
            labels = tuple(f"t{j}" for j in range(k))
        if subjects is None:
            subjects = tuple(f"s{i}" for i in range(n))
        if n_groups is None:
            n_groups = int(groups.max()) + 1 if n else 1
        return cls(matrix, groups, tuple(labels), tuple(subjects), int(n_groups))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.n_groups)

    def block(self, group: int, column: int) -> np.ndarray:
        return self.matrix[self.groups == group, column]

    def with_groups(self, groups, n_groups=None) -> "GroupedCounts":
        """Same counts under a different row partition."""
        groups = np.asarray(groups, dtype=np.int64)
        if n_groups is None:
            n_groups = int(groups.max()) + 1 if groups.size else 1
        return GroupedCounts(self.matrix, groups, self.labels, self.subjects, int(n_groups))

    def drop_subject(self, i: int) -> "GroupedCounts":
        """Remove one row; columns left with no positive entry are dropped
        and the remaining groups are relabeled densely."""
        keep_rows = np.ones(self.n, dtype=bool)
        keep_rows[i] = False
        sub = self.matrix[keep_rows]
        keep_cols = sub.sum(axis=0) > 0
        groups = self.groups[keep_rows]
        uniq, dense = np.unique(groups, return_inverse=True)
        return GroupedCounts(
            sub[:, keep_cols],
            dense,
            tuple(lab for lab, keep in zip(self.labels, keep_cols) if keep),
            tuple(s for s, keep in zip(self.subjects, keep_rows) if keep),
            max(len(uniq), 1),
        )

    def permute_columns(self, order) -> "GroupedCounts":
        order = np.asarray(order)
        return GroupedCounts(
            self.matrix[:, order],
            self.groups,
            tuple(self.labels[j] for j in order),
            self.subjects,
            self.n_groups,
        )


def group_suffstats(data: GroupedCounts, kernel: Kernel):
    """Per-(group, column) sufficient statistics: sizes (d,), suff (d, k, S)."""
    suff = np.zeros((data.n_groups, data.k, kernel.suff_dim))
    if data.n and data.k:
        contribs = kernel.contribs(data.matrix)
        np.add.at(suff, data.groups, contribs)
    return data.group_sizes, suff


def _sum_log_p_zero(kernel: Kernel, sizes: np.ndarray) -> float:
    if sizes.size == 0:
        return 0.0
    return float(np.sum(kernel.log_p_zero(sizes.astype(float))))


def log_marginal_from_suff(kernel: Kernel, lam: float, sizes, suff) -> float:
    """Marginal log law from precomputed block statistics."""
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    sizes = np.asarray(sizes, dtype=np.int64)
    suff = np.asarray(suff, dtype=float)
    k = suff.shape[1]
    log_p0 = _sum_log_p_zero(kernel, sizes)
    value = k * np.log(lam) - log_factorial(k) - lam * (1.0 - np.exp(log_p0))
    if k:
        value += float(np.sum(kernel.log_marginal_suff(sizes[:, None].astype(float), suff)))
    return float(value)


def log_conditional_from_suff(kernel: Kernel, total: int, sizes, suff) -> float:
    """Log law conditional on the total number of traits in the population."""
    sizes = np.asarray(sizes, dtype=np.int64)
    suff = np.asarray(suff, dtype=float)
    k = suff.shape[1]
    if total < k:
        raise ValueError("the total number of traits cannot be below the observed count")
    value = log_binom(total, k) + (total - k) * _sum_log_p_zero(kernel, sizes)
    if k:
        value += float(np.sum(kernel.log_marginal_suff(sizes[:, None].astype(float), suff)))
    return float(value)


def log_marginal_likelihood(data: GroupedCounts, lam: float, kernel: Kernel) -> float:
    sizes, suff = group_suffstats(data, kernel)
    return log_marginal_from_suff(kernel, lam, sizes, suff)


def log_conditional_likelihood(data: GroupedCounts, total: int, kernel: Kernel) -> float:
    sizes, suff = group_suffstats(data, kernel)
    return log_conditional_from_suff(kernel, total, sizes, suff)


def log_poisson_mixture(
    data: GroupedCounts, lam: float, kernel: Kernel, truncation: int
) -> float:
    """Truncated Poisson mixture of the conditional law over the total.

    Converges to ``log_marginal_likelihood`` as the truncation grows; used to
    cross-check the closed form.
    """
    if truncation < data.k:
        raise ValueError("truncation must be at least the observed trait count")
    sizes, suff = group_suffstats(data, kernel)
    terms = [
        poisson_log_pmf(total, lam) + log_conditional_from_suff(kernel, total, sizes, suff)
        for total in range(data.k, truncation + 1)
    ]
    return log_sum_exp(terms)
