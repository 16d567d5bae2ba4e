"""Collapsed Gibbs sampler for the three-level MLC-HDP.

Level 1 clusters patients into patient types, level 2 seizures into seizure
types and level 3 channel observations into base atoms.  Every level keeps

* ``z``    indicator of each item (patient, seizure or channel),
* ``n``    counts, one row per atom of the level above (a single row for
           level 1) and one column per atom of this level,
* ``m``    table counts of the Chinese restaurant franchise,
* ``beta`` parent weights over this level's atoms, last entry beta_new,

with exactly one trailing empty atom.  Level weights pi are integrated out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .base import BasePrior, default_prior, normal_logpdf, predictive_params, sample_params
from .base import student_t_logpdf
from .data import HierDataset
from .dp import (group_marginal_loglik_rows, sample_concentration, sample_log_categorical,
                 sample_parent_weights, sample_table_counts, split_new_atom)
from .samples import PosteriorSample

log = logging.getLogger(__name__)

PATIENT, SEIZURE, CHANNEL = 0, 1, 2


@dataclass
class Priors:
    """Model hyperparameters.

    ``alpha`` and ``gamma`` are initial (or fixed) concentrations for levels
    1, 2, 3.  Both get Gamma(hyper_a, hyper_b) priors (shape, rate) when
    hyperparameter sampling is on.  ``base=None`` means :func:`default_prior`
    of the data.
    """

    base: BasePrior | None = None
    alpha: tuple = (1.0, 1.0, 1.0)
    gamma: tuple = (1.0, 1.0, 1.0)
    hyper_a: float = 1.0
    hyper_b: float = 1.0


@dataclass
class ChainConfig:
    burn_in: int = 0
    thin: int = 1
    n_samples: int = 1
    seed: int = 0
    levels_enabled: int = 3
    hyper_sampling: bool = True
    rao_blackwell: bool = True
    random_scan: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.n_samples < 1:
            raise ValueError("need burn_in >= 0, thin >= 1, n_samples >= 1")
        if self.levels_enabled not in (2, 3):
            raise ValueError("levels_enabled must be 2 or 3")


@dataclass
class LevelState:
    level: int
    z: np.ndarray
    n: np.ndarray
    m: np.ndarray
    beta: np.ndarray
    alpha: float
    gamma: float

    @property
    def L(self) -> int:
        """Number of atoms including the trailing empty one."""
        return self.n.shape[1]

    def copy(self) -> "LevelState":
        return replace(self, z=self.z.copy(), n=self.n.copy(), m=self.m.copy(),
                       beta=self.beta.copy())


@dataclass
class SamplerState:
    X: np.ndarray
    seizure_offsets: np.ndarray
    patient_offsets: np.ndarray
    obs_seizure: np.ndarray
    seizure_patient: np.ndarray
    levels: list
    cnt: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    prior: BasePrior
    priors: Priors
    config: ChainConfig
    rng: np.random.Generator
    iteration: int = 0
    dataset: HierDataset | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.levels[CHANNEL].L

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    def n_nonempty(self, level: int) -> int:
        lv = self.levels[level]
        return int(np.count_nonzero(lv.n.sum(axis=0)))

    def parent_rows(self, level: int) -> np.ndarray:
        """Row of ``levels[level].n`` that each item of the level counts into."""
        if level == PATIENT:
            return np.zeros(len(self.levels[PATIENT].z), dtype=np.int64)
        if level == SEIZURE:
            return self.levels[PATIENT].z[self.seizure_patient]
        return self.levels[SEIZURE].z[self.obs_seizure]

    def copy(self) -> "SamplerState":
        return replace(self, levels=[lv.copy() for lv in self.levels], cnt=self.cnt.copy(),
                       s1=self.s1.copy(), s2=self.s2.copy(), mu=self.mu.copy(),
                       sigma2=self.sigma2.copy())


# -- construction -------------------------------------------------------------

def _empty_level(level, n_items, n_rows, alpha, gamma):
    return LevelState(level, np.full(n_items, -1, dtype=np.int64),
                      np.zeros((n_rows, 1), dtype=np.int64), np.zeros((n_rows, 1), dtype=np.int64),
                      np.array([1.0]), float(alpha), float(gamma))


def _log_prior_weights(lv: LevelState, row: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(lv.n[row] + lv.alpha * lv.beta)


def init_state(dataset: HierDataset, priors: Priors | None = None,
               config: ChainConfig | None = None, rng=None,
               use_likelihood: bool = True) -> SamplerState:
    """Assign every indicator by sequential predictive draws.

    Patients, then seizures, then channels are seated one at a time with the
    collapsed weights given earlier assignments; channels also use the
    posterior predictive of their data unless ``use_likelihood`` is False,
    in which case the result is a draw of the indicators from the prior.
    """
    priors = priors or Priors()
    config = config or ChainConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    X, soff, poff = dataset.flatten()
    T, S, N = len(poff) - 1, len(soff) - 1, X.shape[0]
    prior = (priors.base or default_prior(X)).broadcast(X.shape[1])
    obs_seizure = np.repeat(np.arange(S), np.diff(soff)).astype(np.int64)
    seizure_patient = np.repeat(np.arange(T), np.diff(poff)).astype(np.int64)
    levels = [
        _empty_level(1, T, 1, priors.alpha[0], priors.gamma[0]),
        _empty_level(2, S, 1, priors.alpha[1], priors.gamma[1]),
        _empty_level(3, N, 1, priors.alpha[2], priors.gamma[2]),
    ]
    d = X.shape[1]
    state = SamplerState(X, soff, poff, obs_seizure, seizure_patient, levels,
                         np.zeros(1, dtype=np.int64), np.zeros((1, d)), np.zeros((1, d)),
                         np.zeros((1, d)), np.ones((1, d)), prior, priors, config, rng,
                         dataset=dataset)
    lv1, lv2 = levels[PATIENT], levels[SEIZURE]
    for t in range(T):
        if config.levels_enabled == 2:
            if lv1.L == 1:
                _grow(state, PATIENT)
            k = 0
        else:
            k = sample_log_categorical(_log_prior_weights(lv1, 0), rng)
            if k == lv1.L - 1:
                _grow(state, PATIENT)
        lv1.z[t] = k
        lv1.n[0, k] += 1
    for s in range(S):
        r = lv1.z[seizure_patient[s]]
        k = sample_log_categorical(_log_prior_weights(lv2, r), rng)
        if k == lv2.L - 1:
            _grow(state, SEIZURE)
        lv2.z[s] = k
        lv2.n[r, k] += 1
    _sweep_channels(state, use_likelihood=use_likelihood)
    _recount_stats(state)
    _sample_base_params(state)
    for lv in state.levels:
        lv.m = _table_counts(lv, rng)
    return state


def _active_levels(state):
    if state.config.levels_enabled == 2:
        return state.levels[SEIZURE:]
    return state.levels


def _grow(state: SamplerState, level: int) -> None:
    """Instantiate the trailing atom of ``level`` and append a new empty one."""
    lv = state.levels[level]
    lv.n = np.pad(lv.n, ((0, 0), (0, 1)))
    lv.m = np.pad(lv.m, ((0, 0), (0, 1)))
    lv.beta = split_new_atom(lv.beta, lv.gamma, state.rng)
    if level < CHANNEL:
        child = state.levels[level + 1]
        child.n = np.pad(child.n, ((0, 1), (0, 0)))
        child.m = np.pad(child.m, ((0, 1), (0, 0)))
    else:
        d = state.X.shape[1]
        state.cnt = np.append(state.cnt, 0)
        state.s1 = np.vstack([state.s1, np.zeros((1, d))])
        state.s2 = np.vstack([state.s2, np.zeros((1, d))])
        mu, s2 = sample_params(state.prior, np.zeros(1), np.zeros((1, d)), np.zeros((1, d)),
                               state.rng)
        state.mu = np.vstack([state.mu, mu])
        state.sigma2 = np.vstack([state.sigma2, s2])


# -- Gibbs moves --------------------------------------------------------------

def _order(state, n):
    if state.config.random_scan:
        return state.rng.permutation(n).astype(np.int64)
    return np.arange(n, dtype=np.int64)


def _sweep_channels(state: SamplerState, use_likelihood: bool = True) -> None:
    lv = state.levels[CHANNEL]
    N, d = state.X.shape
    K = lv.L
    cap = K + N + 1
    rb = state.config.rao_blackwell
    rng = state.rng

    def pad_rows(a, fill=0):
        out = np.full((cap,) + a.shape[1:], fill, dtype=a.dtype)
        out[: a.shape[0]] = a
        return out

    n = np.zeros((lv.n.shape[0], cap), dtype=np.int64)
    n[:, :K] = lv.n
    beta = pad_rows(lv.beta, 0.0)
    cnt, s1, s2 = pad_rows(state.cnt), pad_rows(state.s1), pad_rows(state.s2)
    mu, sig2 = pad_rows(state.mu, 0.0), pad_rows(state.sigma2, 1.0)
    order = _order(state, N)
    u = rng.random(N)
    ub = rng.random(N)
    if rb or not use_likelihood:
        fresh_mu = fresh_s2 = np.zeros((1, d))
    else:
        fresh_mu, fresh_s2 = sample_params(state.prior, np.zeros(N), np.zeros((N, d)),
                                           np.zeros((N, d)), rng)
    p = state.prior
    grp = state.parent_rows(CHANNEL)
    K = _kernels.assign_sweep(
        state.X, lv.z, grp, order, n, cnt, s1, s2, beta, K, lv.alpha, lv.gamma, False,
        p.kappa0, p.mu0, p.nu0, p.nu0 * p.sigma0_sq, rb, use_likelihood, mu, sig2,
        fresh_mu, fresh_s2, u, ub)
    lv.n = n[:, :K]
    lv.m = np.pad(lv.m, ((0, 0), (0, K - lv.m.shape[1])))
    lv.beta = beta[:K]
    state.cnt, state.s1, state.s2 = cnt[:K], s1[:K], s2[:K]
    state.mu, state.sigma2 = mu[:K], sig2[:K]
    if not rb and use_likelihood:
        # new trailing atom: its parameters are redrawn before every use
        state.mu[-1], state.sigma2[-1] = (a[0] for a in sample_params(
            state.prior, np.zeros(1), np.zeros((1, d)), np.zeros((1, d)), rng))


def _item_sweep(state: SamplerState, level: int, slices) -> None:
    """Resample indicators of ``level`` (patients or seizures).

    Each item is a group of child items; its score for candidate atom l is
    log(n[r, l] + alpha * beta_l) plus the log probability of its children's
    current indicators under l with l's child weights integrated out.
    """
    lv, child = state.levels[level], state.levels[level + 1]
    rows = state.parent_rows(level)
    rng = state.rng
    for item in _order(state, len(lv.z)):
        r = rows[item]
        old = lv.z[item]
        c = np.bincount(child.z[slices[item]:slices[item + 1]], minlength=child.L)
        lv.n[r, old] -= 1
        child.n[old] -= c
        logw = _log_prior_weights(lv, r) + group_marginal_loglik_rows(
            c, child.alpha, child.beta, child.n)
        new = sample_log_categorical(logw, rng)
        if new == lv.L - 1:
            _grow(state, level)
        lv.z[item] = new
        lv.n[r, new] += 1
        child.n[new] += c


def sample_channel_indicators(state: SamplerState) -> SamplerState:
    _sweep_channels(state)
    return state


def sample_seizure_indicators(state: SamplerState) -> SamplerState:
    _item_sweep(state, SEIZURE, state.seizure_offsets)
    return state


def sample_patient_indicators(state: SamplerState) -> SamplerState:
    if state.config.levels_enabled == 3:
        _item_sweep(state, PATIENT, state.patient_offsets)
    return state


def _table_counts(lv: LevelState, rng) -> np.ndarray:
    m = sample_table_counts(lv.n[:, : lv.L - 1], lv.alpha, lv.beta, rng)
    return np.pad(m, ((0, 0), (0, 1)))


def sample_level_params(state: SamplerState) -> SamplerState:
    """Table counts then parent weights at every active level."""
    for lv in _active_levels(state):
        lv.m = _table_counts(lv, state.rng)
        lv.beta = sample_parent_weights(lv.m[:, : lv.L - 1], lv.gamma, state.rng)
    return state


def sample_hypers(state: SamplerState) -> SamplerState:
    a, b = state.priors.hyper_a, state.priors.hyper_b
    for lv in _active_levels(state):
        lv.alpha = sample_concentration(lv.alpha, int(lv.m.sum()), lv.n.sum(axis=1), a, b,
                                        state.rng)
        k_used = int(np.count_nonzero(lv.m.sum(axis=0)))
        lv.gamma = sample_concentration(lv.gamma, k_used, [int(lv.m.sum())], a, b, state.rng)
    return state


def _recount_stats(state: SamplerState) -> None:
    state.cnt, state.s1, state.s2 = _kernels.recompute_stats(
        state.X, state.levels[CHANNEL].z, state.K)


def _sample_base_params(state: SamplerState) -> None:
    state.mu, state.sigma2 = sample_params(state.prior, state.cnt, state.s1, state.s2, state.rng)


def sample_base_params(state: SamplerState) -> SamplerState:
    """Recompute statistics exactly, then draw (mu, sigma^2) for every atom.

    The trailing empty atom is drawn from the prior.
    """
    _recount_stats(state)
    if state.cnt[-1] > 0:
        _grow(state, CHANNEL)
    _sample_base_params(state)
    return state


def prune(state: SamplerState) -> SamplerState:
    """Drop empty non-trailing atoms at every level, compacting labels."""
    for level, lv in enumerate(state.levels):
        used = lv.n.sum(axis=0) > 0
        used[-1] = True
        if used.all():
            continue
        lost = lv.beta[~used].sum()
        remap = np.cumsum(used) - 1
        lv.z = remap[lv.z]
        lv.n, lv.m = lv.n[:, used], lv.m[:, used]
        lv.beta = lv.beta[used]
        lv.beta[-1] += lost
        lv.beta = lv.beta / lv.beta.sum()
        if level < CHANNEL:
            child = state.levels[level + 1]
            child.n, child.m = child.n[used], child.m[used]
        else:
            state.cnt, state.s1, state.s2 = state.cnt[used], state.s1[used], state.s2[used]
            state.mu, state.sigma2 = state.mu[used], state.sigma2[used]
    return state


def step(state: SamplerState) -> SamplerState:
    """One full sweep: indicators (channels, seizures, patients), level
    parameters, optional hyperparameters, base parameters, pruning."""
    sample_channel_indicators(state)
    sample_seizure_indicators(state)
    sample_patient_indicators(state)
    sample_level_params(state)
    if state.config.hyper_sampling:
        sample_hypers(state)
    sample_base_params(state)
    prune(state)
    state.iteration += 1
    return state


# -- data regeneration (prior simulation and Geweke tests) -------------------

def resample_data(state: SamplerState) -> SamplerState:
    """Replace the observations by draws from the atoms they are assigned to."""
    z = state.levels[CHANNEL].z
    state.X = state.rng.normal(state.mu[z], np.sqrt(state.sigma2[z]))
    _recount_stats(state)
    return state


def sample_prior_state(dataset: HierDataset, priors: Priors, config: ChainConfig,
                       rng=None) -> SamplerState:
    """Joint draw of indicators, weights, atoms and data from the model.

    ``dataset`` only supplies the nesting shape; ``priors.base`` must be set.
    """
    if priors.base is None:
        raise ValueError("prior simulation needs an explicit base prior")
    state = init_state(dataset, priors, config, rng, use_likelihood=False)
    d = state.X.shape[1]
    K = state.K
    state.mu, state.sigma2 = sample_params(state.prior, np.zeros(K), np.zeros((K, d)),
                                           np.zeros((K, d)), state.rng)
    return resample_data(state)


# -- diagnostics --------------------------------------------------------------

def audit(state: SamplerState, tol: float = 1e-9) -> list[str]:
    """Consistency checks; returns a list of violations (empty when consistent)."""
    bad = []
    lv1, lv2, lv3 = state.levels
    expect = [
        np.zeros((1, lv1.L), dtype=np.int64),
        np.zeros((lv1.L, lv2.L), dtype=np.int64),
        np.zeros((lv2.L, lv3.L), dtype=np.int64),
    ]
    for level, lv in enumerate(state.levels):
        if np.any(lv.z < 0) or np.any(lv.z >= lv.L):
            bad.append(f"level {level + 1}: indicator out of range")
            continue
        rows = state.parent_rows(level)
        if np.any(rows >= expect[level].shape[0]):
            bad.append(f"level {level + 1}: parent row out of range")
            continue
        np.add.at(expect[level], (rows, lv.z), 1)
        if lv.n.shape != expect[level].shape or not np.array_equal(lv.n, expect[level]):
            bad.append(f"level {level + 1}: counts differ from recomputation")
        col = lv.n.sum(axis=0)
        if col[-1] != 0:
            bad.append(f"level {level + 1}: trailing atom not empty")
        if np.any(col[:-1] == 0):
            bad.append(f"level {level + 1}: non-trailing empty atom")
        if abs(lv.beta.sum() - 1.0) > 1e-12:
            bad.append(f"level {level + 1}: beta sums to {lv.beta.sum()!r}")
        if lv.beta.shape[0] != lv.L:
            bad.append(f"level {level + 1}: beta has {lv.beta.shape[0]} entries for {lv.L} atoms")
        if np.any(lv.beta < 0) or lv.beta[-1] <= 0:
            bad.append(f"level {level + 1}: invalid beta entries")
        if lv.m.shape != lv.n.shape or np.any(lv.m > lv.n) or np.any((lv.m > 0) != (lv.n > 0)):
            # m is only refreshed by the level-parameter step
            bad.append(f"level {level + 1}: table counts inconsistent with counts")
    if not bad:
        cnt, s1, s2 = _kernels.recompute_stats(state.X, lv3.z, lv3.L)
        if not np.array_equal(cnt, state.cnt):
            bad.append("base: atom counts differ from recomputation")
        scale = np.maximum(np.abs(s1), 1.0)
        if state.s1.shape != s1.shape or np.any(np.abs(state.s1 - s1) > tol * scale):
            bad.append("base: sums differ from recomputation")
        scale = np.maximum(np.abs(s2), 1.0)
        if state.s2.shape != s2.shape or np.any(np.abs(state.s2 - s2) > tol * scale):
            bad.append("base: sums of squares differ from recomputation")
        if state.mu.shape != s1.shape or np.any(state.sigma2 <= 0):
            bad.append("base: atom parameters malformed")
    return bad


def channel_log_scores(state: SamplerState, i: int) -> np.ndarray:
    """Unnormalised log posterior over atoms for observation i, with i removed."""
    lv = state.levels[CHANNEL]
    k_old = lv.z[i]
    r = state.parent_rows(CHANNEL)[i]
    x = state.X[i]
    n = lv.n[r].astype(float).copy()
    n[k_old] -= 1
    cnt = state.cnt.astype(float).copy()
    s1, s2 = state.s1.copy(), state.s2.copy()
    cnt[k_old] -= 1
    s1[k_old] -= x
    s2[k_old] -= x * x
    with np.errstate(divide="ignore"):
        prior_w = np.log(n + lv.alpha * lv.beta)
    if state.config.rao_blackwell:
        nu, loc, scale2 = predictive_params(state.prior, cnt, s1, s2)
        like = np.sum(student_t_logpdf(x, nu, loc, scale2), axis=1)
    else:
        like = normal_logpdf(x, state.mu, state.sigma2)
    return prior_w + like


def relabel(state: SamplerState, level: int, perm) -> SamplerState:
    """Copy of ``state`` with the non-trailing atoms of ``level`` permuted.

    ``perm[new] = old``; the trailing empty atom stays last.
    """
    out = state.copy()
    lv = out.levels[level]
    perm = np.concatenate([np.asarray(perm, dtype=np.int64), [lv.L - 1]])
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    lv.z = inv[lv.z]
    lv.n, lv.m, lv.beta = lv.n[:, perm], lv.m[:, perm], lv.beta[perm]
    if level < CHANNEL:
        child = out.levels[level + 1]
        child.n, child.m = child.n[perm], child.m[perm]
    else:
        out.cnt, out.s1, out.s2 = out.cnt[perm], out.s1[perm], out.s2[perm]
        out.mu, out.sigma2 = out.mu[perm], out.sigma2[perm]
    return out


# -- chains -------------------------------------------------------------------

def to_sample(state: SamplerState) -> PosteriorSample:
    lv1, lv2, lv3 = state.levels
    poff, soff = state.patient_offsets, state.seizure_offsets
    z2 = [lv2.z[poff[t]:poff[t + 1]].tolist() for t in range(len(poff) - 1)]
    z3 = [[lv3.z[soff[s]:soff[s + 1]].tolist() for s in range(poff[t], poff[t + 1])]
          for t in range(len(poff) - 1)]
    return PosteriorSample(
        model="mlchdp", iter=state.iteration, z1=lv1.z.tolist(), z2=z2, z3=z3,
        beta={"1": lv1.beta.copy(), "2": lv2.beta.copy(), "3": lv3.beta.copy()},
        mu=state.mu.copy(), sigma2=state.sigma2.copy(),
        hypers={"alpha": [lv.alpha for lv in state.levels],
                "gamma": [lv.gamma for lv in state.levels]})


def run_chain(dataset: HierDataset, priors: Priors | None, config: ChainConfig,
              callback=None) -> list[PosteriorSample]:
    """Burn in, then record every ``thin``-th state until ``n_samples`` are kept."""
    rng = np.random.default_rng(config.seed)
    state = init_state(dataset, priors or Priors(), config, rng)
    samples = []
    total = config.burn_in + config.thin * config.n_samples
    for it in range(1, total + 1):
        step(state)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            samples.append(to_sample(state))
            if callback is not None:
                callback(state)
    log.debug("chain seed=%d finished: K=%d L2=%d L1=%d", config.seed, state.K - 1,
              state.levels[SEIZURE].L - 1, state.levels[PATIENT].L - 1)
    return samples
