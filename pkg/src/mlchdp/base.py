"""Conjugate diagonal-Normal observation model.

Each dimension has an independent Normal / scaled-inverse-chi^2 prior

    sigma^2 ~ Inv-chi^2(nu0, s0^2),   mu | sigma^2 ~ N(mu0, sigma^2 / kappa0)

so posteriors are available in closed form from (count, sum, sum of squares)
and the marginal predictive of a new point is a product of Student-t
densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class BasePrior:
    """Hyperparameters (kappa0, mu0, nu0, sigma0^2), each broadcast to ``d``."""

    kappa0: np.ndarray
    mu0: np.ndarray
    nu0: np.ndarray
    sigma0_sq: np.ndarray

    def __post_init__(self):
        arrs = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in
                                     (self.kappa0, self.mu0, self.nu0, self.sigma0_sq)))
        for name, v in zip(("kappa0", "mu0", "nu0", "sigma0_sq"), arrs):
            object.__setattr__(self, name, np.array(v))
        if np.any(self.kappa0 <= 0) or np.any(self.nu0 <= 0) or np.any(self.sigma0_sq <= 0):
            raise ValueError("kappa0, nu0 and sigma0_sq must be positive")

    @property
    def d(self) -> int:
        return self.mu0.shape[0]

    def broadcast(self, d: int) -> "BasePrior":
        if self.d == d:
            return self
        if self.d != 1:
            raise ValueError(f"prior has dimension {self.d}, data has {d}")
        return BasePrior(*(np.repeat(v, d) for v in
                           (self.kappa0, self.mu0, self.nu0, self.sigma0_sq)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("kappa0", "mu0", "nu0", "sigma0_sq")}


def default_prior(X) -> BasePrior:
    """Weakly informative prior scaled to the data.

    kappa0 = 1, nu0 = 3, mu0 = empirical mean, sigma0^2 = empirical variance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    var = X.var(axis=0) if X.shape[0] > 1 else np.ones(X.shape[1])
    var = np.where(var > 0, var, 1.0)
    return BasePrior(np.ones(X.shape[1]), X.mean(axis=0), np.full(X.shape[1], 3.0), var)


# -- sufficient statistics --------------------------------------------------

def _two_sum(s, c, x):
    # Neumaier compensated summation, elementwise
    t = s + x
    c = c + np.where(np.abs(s) >= np.abs(x), (s - t) + x, (x - t) + s)
    return t, c


@dataclass(frozen=True)
class SuffStats:
    """(count, sum, sum of squares) with compensation terms for the sums.

    ``total`` and ``total_sq`` give the compensated values; the raw
    accumulators are kept so that long add/remove sequences do not drift.
    """

    count: int
    sum_: np.ndarray
    sum_sq_: np.ndarray
    c_sum: np.ndarray
    c_sq: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "SuffStats":
        z = np.zeros(d)
        return cls(0, z, z, z, z)

    @classmethod
    def of(cls, X) -> "SuffStats":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s = cls.empty(X.shape[1])
        for x in X:
            s = stats_add(s, x)
        return s

    @property
    def total(self) -> np.ndarray:
        return self.sum_ + self.c_sum

    @property
    def total_sq(self) -> np.ndarray:
        return self.sum_sq_ + self.c_sq

    @property
    def d(self) -> int:
        return self.sum_.shape[0]

    def centered_sq(self) -> np.ndarray:
        """Sum of squared deviations from the mean."""
        if self.count == 0:
            return np.zeros(self.d)
        return self.total_sq - self.total ** 2 / self.count


def stats_add(stats: SuffStats, x) -> SuffStats:
    x = np.asarray(x, dtype=float).reshape(-1)
    s, cs = _two_sum(stats.sum_, stats.c_sum, x)
    q, cq = _two_sum(stats.sum_sq_, stats.c_sq, x * x)
    return SuffStats(stats.count + 1, s, q, cs, cq)


def stats_remove(stats: SuffStats, x) -> SuffStats:
    if stats.count < 1:
        raise ValueError("cannot remove an observation from empty statistics")
    if stats.count == 1:
        return SuffStats.empty(stats.d)
    x = np.asarray(x, dtype=float).reshape(-1)
    s, cs = _two_sum(stats.sum_, stats.c_sum, -x)
    q, cq = _two_sum(stats.sum_sq_, stats.c_sq, -x * x)
    return SuffStats(stats.count - 1, s, q, cs, cq)


# -- posterior quantities ---------------------------------------------------

def posterior_params(prior: BasePrior, count, s1, s2):
    """Conjugate update, vectorised over leading atom axes.

    ``count`` has shape (K,) (or scalar) and ``s1``, ``s2`` shape (K, d).
    Returns (kappa_n, mu_n, nu_n, sigma_n^2), each (K, d).
    """
    n = np.asarray(count, dtype=float)[..., None]
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    kn = prior.kappa0 + n
    mun = (prior.kappa0 * prior.mu0 + s1) / kn
    nun = prior.nu0 + n
    safe_n = np.where(n > 0, n, 1.0)
    centered = np.where(n > 0, np.maximum(s2 - s1 ** 2 / safe_n, 0.0), 0.0)
    shift = np.where(n > 0, prior.kappa0 * (s1 - n * prior.mu0) ** 2 / (kn * safe_n), 0.0)
    sn2 = (prior.nu0 * prior.sigma0_sq + centered + shift) / nun
    return kn, mun, nun, sn2


def _stats_arrays(stats: SuffStats):
    return stats.count, stats.total, stats.total_sq


def sample_params(prior: BasePrior, count, s1, s2, rng):
    """Posterior draws of (mu, sigma^2) for a stack of atoms, each (K, d)."""
    kn, mun, nun, sn2 = posterior_params(prior, count, s1, s2)
    sigma2 = nun * sn2 / rng.chisquare(nun)
    mu = rng.normal(mun, np.sqrt(sigma2 / kn))
    return mu, sigma2


def sample_atom_params(prior: BasePrior, stats: SuffStats, rng):
    """One draw of (mu, sigma^2) from the posterior given ``stats``.

    With empty statistics this is a draw from the prior.
    """
    mu, sigma2 = sample_params(prior, *(np.asarray(a)[None] for a in _stats_arrays(stats)), rng)
    return mu[0], sigma2[0]


@dataclass
class BaseAtom:
    mu: np.ndarray
    sigma2: np.ndarray
    stats: SuffStats | None = None

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, dtype=float))
        if np.any(self.sigma2 <= 0):
            raise ValueError("sigma2 must be positive")


def normal_logpdf(x, mu, sigma2):
    """Sum over the last axis of univariate Normal log densities."""
    return np.sum(-0.5 * (LOG_2PI + np.log(sigma2) + (x - mu) ** 2 / sigma2), axis=-1)


def loglik(atom: BaseAtom, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != atom.mu.shape:
        raise ValueError(f"dimension mismatch: atom d={atom.mu.shape[0]}, x has shape {x.shape}")
    return float(normal_logpdf(x, atom.mu, atom.sigma2))


def student_t_logpdf(x, nu, loc, scale2):
    """Elementwise log density of a location-scale Student-t."""
    return (gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * np.log(nu * np.pi * scale2)
            - (nu + 1) / 2 * np.log1p((x - loc) ** 2 / (nu * scale2)))


def predictive_params(prior: BasePrior, count, s1, s2):
    """Student-t (dof, location, scale^2) of the posterior predictive, each (K, d)."""
    kn, mun, nun, sn2 = posterior_params(prior, count, s1, s2)
    return nun, mun, sn2 * (1.0 + 1.0 / kn)


def posterior_predictive_loglik(prior: BasePrior, stats: SuffStats, x) -> float:
    """log p(x | data summarised by ``stats``) with (mu, sigma^2) integrated out."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nu, loc, scale2 = predictive_params(prior, *(np.asarray(a)[None] for a in _stats_arrays(stats)))
    return float(np.sum(student_t_logpdf(x, nu[0], loc[0], scale2[0])))
