"""Posterior summaries and model-comparison metrics."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .base import normal_logpdf

DENSITY_FLOOR = 1e-12
KL_GRID = (-15.0, 15.0, 3001)


@dataclass
class GridDensity:
    grid: np.ndarray
    pdf: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.pdf = np.asarray(self.pdf, dtype=float)
        if self.grid.shape != self.pdf.shape or self.grid.ndim != 1:
            raise ValueError("grid and pdf must be 1-D arrays of equal length")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly ascending")
        if np.any(self.pdf < 0):
            raise ValueError("density values must be nonnegative")

    def integral(self) -> float:
        return float(np.trapezoid(self.pdf, self.grid))


def kl_grid() -> np.ndarray:
    lo, hi, n = KL_GRID
    return np.linspace(lo, hi, n)


# -- group mixtures -----------------------------------------------------------

def group_mixture(sample, g: int):
    """(weights, mu, sigma2) of group ``g``'s mixture in one posterior sample.

    MLC-HDP groups are seizures: the weights are the collapsed predictive
    weights (n_lk + alpha * beta_k) / (n_l + alpha) of the seizure's type,
    the trailing atom carrying the new-atom mass.  NDP groups use the stick
    weights of their top atom.  A DP sample is a single group with CRP
    weights.
    """
    if sample.model == "ndp":
        Kb = int(sample.extra["K_bottom"])
        top = int(sample.z2[g])
        w = np.asarray(sample.beta["bottom"])[top]
        sl = slice(top * Kb, (top + 1) * Kb)
        return w, sample.mu[sl], sample.sigma2[sl]
    K = sample.mu.shape[0]
    if sample.model == "dp":
        if g != 0:
            raise ValueError("a DP sample has a single group")
        counts = np.bincount(sample.obs_labels(), minlength=K).astype(float)
        alpha = float(sample.hypers["alpha"])
        w = counts.copy()
        w[-1] = alpha
        return w / w.sum(), sample.mu, sample.sigma2
    types = sample.group_labels()
    z3 = sample.group_obs_labels()
    alpha = float(sample.hypers["alpha"][2])
    beta = np.asarray(sample.beta["3"], dtype=float)
    counts = np.zeros(K)
    for s in np.nonzero(types == types[g])[0]:
        counts += np.bincount(z3[s], minlength=K)
    w = (counts + alpha * beta) / (counts.sum() + alpha)
    return w, sample.mu, sample.sigma2


def mixture_pdf(grid, w, mu, sigma2) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(len(w), -1)
    sigma2 = np.asarray(sigma2, dtype=float).reshape(len(w), -1)
    if mu.shape[1] != 1:
        raise ValueError("grid densities need d = 1 samples")
    keep = np.asarray(w) > 0
    comp = norm.pdf(np.asarray(grid)[:, None], mu[keep, 0], np.sqrt(sigma2[keep, 0]))
    return comp @ np.asarray(w)[keep]


def posterior_density(samples, grid, group: int = 0) -> GridDensity:
    """Average over samples of group ``group``'s mixture density on ``grid``."""
    if not samples:
        raise ValueError("no samples")
    grid = np.asarray(grid, dtype=float)
    acc = np.zeros_like(grid)
    for s in samples:
        if s.mu.shape[1] != 1:
            raise ValueError("posterior_density needs d = 1 samples")
        acc += mixture_pdf(grid, *group_mixture(s, group))
    return GridDensity(grid, acc / len(samples))


def kl_divergence(true: GridDensity, est: GridDensity, floor: float = DENSITY_FLOOR) -> float:
    """Trapezoid estimate of KL(true || est); est is floored before the log."""
    if true.grid.shape != est.grid.shape or not np.array_equal(true.grid, est.grid):
        raise ValueError("grid mismatch")
    p = true.pdf
    q = np.maximum(est.pdf, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return float(max(np.trapezoid(f, true.grid), 0.0))


# -- clusterings ----------------------------------------------------------------

def rand_c(a, b) -> float:
    """Rand's C: fraction of item pairs on which two clusterings agree."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("clusterings must have equal lengths")
    n = a.shape[0]
    if n < 1:
        raise ValueError("clusterings must be nonempty")
    if n == 1:
        return 1.0
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(c):
        return int(np.sum(c * (c - 1) // 2))

    both = pairs(table)
    same_a = pairs(table.sum(axis=1))
    same_b = pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    return (total + 2 * both - same_a - same_b) / total


def n_nonempty(sample, level: str = "top") -> int:
    """Non-empty atoms of a sample: "top" (seizure types / NDP top atoms) or "base"."""
    if level == "top":
        return len(np.unique(sample.group_labels()))
    if level == "base":
        return len(np.unique(sample.obs_labels()))
    if level == "patient":
        return len(np.unique(sample.z1))
    raise ValueError(f"unknown level {level!r}")


def cluster_count_posterior(samples, level: str = "top") -> dict:
    if not samples:
        raise ValueError("no samples")
    c = Counter(n_nonempty(s, level) for s in samples)
    return {k: c[k] / len(samples) for k in sorted(c)}


def histogram_mode(hist: dict) -> int:
    return max(sorted(hist), key=lambda k: hist[k])


# -- held-out perplexity ----------------------------------------------------------

def seizure_loglik(x, assignments, mu, sigma2) -> float:
    """log p(s) = sum over channels of log f_z(x): the product of channel likelihoods.

    ``assignments`` is an int label per channel, or an (N, K) matrix of
    assignment probabilities, in which case the expected log likelihood
    sum_i sum_k r_ik log f_k(x_i) is returned.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.asarray(assignments)
    if z.shape[0] != x.shape[0]:
        raise ValueError("every held-out observation needs an assigned atom")
    mu, sigma2 = np.asarray(mu), np.asarray(sigma2)
    if z.ndim == 2:
        ll = normal_logpdf(x[:, None, :], mu[None], sigma2[None])
        return float(np.sum(np.where(z > 0, z * ll, 0.0)))
    return float(np.sum(normal_logpdf(x, mu[z.astype(int)], sigma2[z.astype(int)])))


def log_perplexity(seizures, assignments, mu, sigma2) -> float:
    """-(1/M) sum_j log p(s_j) over M held-out seizures."""
    if len(seizures) == 0:
        raise ValueError("no held-out seizures")
    lp = [seizure_loglik(x, z, mu, sigma2) for x, z in zip(seizures, assignments)]
    return -float(np.mean(lp))


def perplexity(seizures, assignments, mu, sigma2) -> float:
    """Conditional perplexity exp(-(1/M) sum_j log p(s_j))."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_perplexity(seizures, assignments, mu, sigma2)))


ASSIGN_MODES = ("map", "expected")


def _posterior_rows(logp):
    return np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))


def _resolve(post, mode):
    if mode == "map":
        return np.argmax(post, axis=1)
    if mode == "expected":
        return post
    raise ValueError(f"unknown assignment mode {mode!r}; expected one of {ASSIGN_MODES}")


def map_assign(x, log_w, mu, sigma2) -> np.ndarray:
    """argmax_k log w_k + log f_k(x) for every row of x (atoms with w = 0 excluded)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ll = normal_logpdf(x[:, None, :], np.asarray(mu)[None], np.asarray(sigma2)[None])
    return np.argmax(ll + np.asarray(log_w)[None, :], axis=1)


def dp_heldout_assign(sample, seizures, mode: str = "map"):
    """Held-out channel atoms under a DP sample's CRP weights.

    Only atoms with training data are candidates.  ``mode="map"`` gives the
    highest-posterior atom of every channel, ``"expected"`` the posterior
    probabilities themselves.
    """
    K = sample.mu.shape[0]
    counts = np.bincount(sample.obs_labels(), minlength=K).astype(float)
    with np.errstate(divide="ignore"):
        logw = np.log(counts)
    out = []
    for x in seizures:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ll = normal_logpdf(x[:, None, :], sample.mu[None], sample.sigma2[None])
        out.append(_resolve(_posterior_rows(ll + logw[None, :]), mode))
    return out


def mlchdp_heldout_assign(sample, seizures, patient: int, mode: str = "map"):
    """Held-out channel atoms for new seizures of ``patient``.

    A seizure's type posterior is proportional to the type's weight under
    the patient's type times the product over channels of the type's
    mixture density.  ``mode="map"`` takes the highest-posterior type and
    then each channel's highest-posterior atom within it; ``"expected"``
    returns channel-atom probabilities with the type summed out.  Only
    atoms and types with training data are candidates.
    """
    K = sample.mu.shape[0]
    alpha = [float(a) for a in sample.hypers["alpha"]]
    beta2 = np.asarray(sample.beta["2"], dtype=float)
    beta3 = np.asarray(sample.beta["3"], dtype=float)
    types = sample.group_labels()
    L2 = beta2.shape[0]
    z1 = np.asarray(sample.z1, dtype=int)
    n2 = np.zeros(L2)
    for t, row in enumerate(sample.z2):
        if z1[t] == z1[patient]:
            n2 += np.bincount(np.asarray(row, dtype=int), minlength=L2)
    n3 = np.zeros((L2, K))
    for s, z in zip(types, sample.group_obs_labels()):
        n3[s] += np.bincount(z, minlength=K)
    used = n3.sum(axis=1) > 0
    live = n3.sum(axis=0) > 0
    with np.errstate(divide="ignore"):
        log_type = np.log(n2 + alpha[1] * beta2) + np.where(used, 0.0, -np.inf)
        log_atom = np.log(n3 + alpha[2] * beta3[None, :K]) + np.where(live, 0.0, -np.inf)[None]
        log_atom -= logsumexp(log_atom, axis=1, keepdims=True)
    out = []
    for x in seizures:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ll = normal_logpdf(x[:, None, :], sample.mu[None], sample.sigma2[None])  # (N, K)
        joint = ll[None, :, :] + log_atom[:, None, :]                            # (L, N, K)
        per_type = np.where(used[:, None], logsumexp(joint, axis=2), 0.0)
        type_post = _posterior_rows(log_type + per_type.sum(axis=1))
        chan_post = _posterior_rows(joint)
        if mode == "map":
            out.append(np.argmax(chan_post[int(np.argmax(type_post))], axis=1))
        elif mode == "expected":
            out.append(np.einsum("l,lnk->nk", type_post, np.nan_to_num(chan_post)))
        else:
            raise ValueError(f"unknown assignment mode {mode!r}; expected one of {ASSIGN_MODES}")
    return out


# -- metric tables ---------------------------------------------------------------

def standard_error(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float("nan")
    return float(np.std(v, ddof=1) / np.sqrt(v.size))


def metric_rows(metric: str, model: str, dataset: str, per_chain) -> list[dict]:
    """Per-chain rows plus "mean" and "se" aggregate rows."""
    rows = [{"metric": metric, "model": model, "dataset": dataset, "chain": str(c), "value": v}
            for c, v in enumerate(per_chain)]
    rows.append({"metric": metric, "model": model, "dataset": dataset, "chain": "mean",
                 "value": float(np.mean(per_chain))})
    rows.append({"metric": metric, "model": model, "dataset": dataset, "chain": "se",
                 "value": standard_error(per_chain)})
    return rows


METRIC_FIELDS = ("metric", "model", "dataset", "chain", "value")


def write_metrics(dest, rows) -> None:
    """CSV with columns metric,model,dataset,chain,value to a path or open file."""
    if hasattr(dest, "write"):
        _write_rows(dest, rows)
        return
    with open(dest, "w", newline="") as fh:
        _write_rows(fh, rows)


def _write_rows(fh, rows):
    w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "value": repr(float(r["value"]))})


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{**r, "value": float(r["value"])} for r in csv.DictReader(fh)]
