"""Dirichlet-process building blocks shared by every level of the model.

Weights over the atoms of a level are always stored as a vector whose last
entry is the mass of all not-yet-instantiated atoms ("beta_new").
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, logsumexp


def stick_breaking(gamma: float, n_sticks: int, rng) -> np.ndarray:
    """First ``n_sticks`` GEM(gamma) weights plus the remaining mass."""
    b = rng.beta(1.0, gamma, size=n_sticks)
    rest = np.concatenate([[1.0], np.cumprod(1.0 - b)])
    return np.concatenate([b * rest[:-1], rest[-1:]])


def split_new_atom(beta: np.ndarray, gamma: float, rng) -> np.ndarray:
    """Instantiate one atom from the remainder mass.

    The last entry beta_new is split as (b * beta_new, (1 - b) * beta_new) with
    b ~ Beta(1, gamma), giving a vector one longer.
    """
    b = rng.beta(1.0, gamma)
    rest = beta[-1]
    return np.concatenate([beta[:-1], [b * rest, (1.0 - b) * rest]])


def collapsed_weight(n_lk, n_l, alpha, beta_k):
    """Predictive probability of sub-atom k under a level-atom with its weights
    integrated out: (n_lk + alpha * beta_k) / (n_l + alpha)."""
    return (n_lk + alpha * beta_k) / (n_l + alpha)


def normalize_log_weights(logw) -> np.ndarray:
    logw = np.asarray(logw, dtype=float)
    p = np.exp(logw - np.max(logw))
    return p / p.sum()


def sample_log_categorical(logw, rng) -> int:
    """Draw an index from unnormalised log weights (max-subtracted)."""
    p = normalize_log_weights(logw)
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(p), u, side="right"), len(p) - 1))


def sample_table_counts(n, alpha: float, beta, rng) -> np.ndarray:
    """Number of tables per (restaurant, dish) in the Chinese restaurant franchise.

    For each cell with n > 0 customers, m = sum_{i=1..n} Bernoulli(ab / (ab + i - 1))
    with ab = alpha * beta_k, which is Antoniak-distributed.

    Parameters
    ----------
    n : (R, K) int array of customer counts
    beta : (K,) or longer; only the first K entries are used
    """
    n = np.atleast_2d(np.asarray(n, dtype=np.int64))
    ab = alpha * np.asarray(beta, dtype=float)[: n.shape[1]]
    m = np.zeros_like(n)
    for r, k in zip(*np.nonzero(n)):
        c = n[r, k]
        if c == 1:
            m[r, k] = 1
            continue
        i = np.arange(c)
        p = ab[k] / (ab[k] + i)
        m[r, k] = int(np.count_nonzero(rng.random(c) < p))
    return m


def sample_parent_weights(m, gamma: float, rng) -> np.ndarray:
    """beta ~ Dirichlet(m_.1, ..., m_.K, gamma) from table counts.

    Atoms with zero tables get weight exactly zero.  The returned vector has
    K + 1 entries, the last being beta_new.
    """
    m = np.atleast_2d(np.asarray(m))
    col = m.sum(axis=0).astype(float) if m.size else np.zeros(m.shape[1] if m.ndim == 2 else 0)
    K = col.shape[0]
    if K == 0:
        return np.array([1.0])
    if not np.any(col > 0):
        raise ValueError("all table counts are zero with instantiated atoms: inconsistent state")
    shape = np.concatenate([col, [gamma]])
    pos = shape > 0
    # log-space gamma draws: G(a) = G(a + 1) * U^(1/a), stable for small shapes
    logg = np.full(shape.shape, -np.inf)
    a = shape[pos]
    logg[pos] = np.log(rng.gamma(a + 1.0)) + np.log(rng.random(a.shape)) / a
    beta = np.exp(logg - logsumexp(logg))
    if gamma > 0 and beta[-1] <= 0:
        beta[-1] = np.finfo(float).tiny
    return beta / beta.sum()


def group_marginal_loglik(counts, alpha: float, beta, base=None) -> float:
    """log probability of a group's sub-atom assignments under one level-atom.

    Items are added one at a time in a fixed order, each scored with
    :func:`collapsed_weight` given the candidate's existing counts ``base``
    plus the items already added.  The product depends only on the count
    vector, so it is evaluated in closed form with log-gamma functions.
    """
    counts = np.asarray(counts)
    base = np.zeros(counts.shape[0]) if base is None else np.asarray(base, dtype=float)
    return float(group_marginal_loglik_rows(counts, alpha, beta, base[None, :])[0])


def group_marginal_loglik_rows(counts, alpha: float, beta, rows) -> np.ndarray:
    """:func:`group_marginal_loglik` for every candidate row of ``rows`` (L, K)."""
    counts = np.asarray(counts)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    K = counts.shape[0]
    total = counts.sum()
    if total == 0:
        return np.zeros(rows.shape[0])
    nz = np.nonzero(counts)[0]
    c = counts[nz]
    a = alpha * np.asarray(beta, dtype=float)[:K][nz] + rows[:, nz]
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.where(a > 0, gammaln(a + c) - gammaln(np.where(a > 0, a, 1.0)), -np.inf)
    n_l = rows.sum(axis=1) + alpha
    return num.sum(axis=1) - (gammaln(n_l + total) - gammaln(n_l))


def sample_concentration(current: float, table_total: int, group_sizes, a: float, b: float,
                         rng, n_iter: int = 1) -> float:
    """Auxiliary-variable update of a DP concentration with a Gamma(a, b) prior.

    ``table_total`` is the number of clusters (tables) and ``group_sizes`` the
    number of customers in each restaurant.  For every group j with n_j > 0,
    w_j ~ Beta(alpha + 1, n_j) and s_j ~ Bernoulli(n_j / (n_j + alpha));
    then alpha ~ Gamma(a + tables - sum s, rate b - sum log w).  A top-level
    concentration is the single-group case (customers = tables below it).
    """
    sizes = np.asarray(group_sizes, dtype=float)
    sizes = sizes[sizes > 0]
    alpha = float(current)
    for _ in range(n_iter):
        if sizes.size == 0:
            return float(rng.gamma(a, 1.0 / b))
        w = rng.beta(alpha + 1.0, sizes)
        s = rng.random(sizes.shape) < sizes / (sizes + alpha)
        shape = a + table_total - np.count_nonzero(s)
        rate = b - np.sum(np.log(w))
        alpha = float(rng.gamma(shape, 1.0 / rate))
    return alpha
