"""Comparison models: a collapsed DP mixture and a truncated nested DP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .base import BasePrior, default_prior, sample_params
from .dp import sample_concentration
from .samples import PosteriorSample
from .sampler import ChainConfig


# -- DP mixture ---------------------------------------------------------------

def dp_prior_weights(counts, alpha: float) -> np.ndarray:
    """CRP seating probabilities: n_k / (n + alpha) for each cluster, then
    alpha / (n + alpha) for a new one, where n is the number already seated."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    return np.append(counts, alpha) / (n + alpha)


@dataclass
class DPState:
    X: np.ndarray
    z: np.ndarray
    n: np.ndarray      # (1, K) cluster sizes, trailing empty cluster last
    cnt: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    alpha: float
    prior: BasePrior
    rng: np.random.Generator
    iteration: int = 0

    @property
    def K(self) -> int:
        return self.n.shape[1]


def _dp_sweep(state: DPState, use_likelihood=True, random_scan=False):
    N, d = state.X.shape
    K = state.K
    cap = K + N + 1
    n = np.zeros((1, cap), dtype=np.int64)
    n[:, :K] = state.n
    cnt = np.zeros(cap, dtype=np.int64)
    cnt[:K] = state.cnt
    s1 = np.zeros((cap, d))
    s1[:K] = state.s1
    s2 = np.zeros((cap, d))
    s2[:K] = state.s2
    dummy = np.zeros((1, d))
    order = (state.rng.permutation(N) if random_scan else np.arange(N)).astype(np.int64)
    u = state.rng.random(N)
    p = state.prior
    K = _kernels.assign_sweep(
        state.X, state.z, np.zeros(N, dtype=np.int64), order, n, cnt, s1, s2,
        np.zeros(cap), K, state.alpha, 1.0, True, p.kappa0, p.mu0, p.nu0,
        p.nu0 * p.sigma0_sq, True, use_likelihood, np.zeros((cap, d)), np.ones((cap, d)),
        dummy, dummy, u, u)
    state.n = n[:, :K]
    state.cnt, state.s1, state.s2 = _kernels.recompute_stats(state.X, state.z, K)


def _dp_prune(state: DPState):
    used = state.n[0] > 0
    used[-1] = True
    remap = np.cumsum(used) - 1
    state.z = remap[state.z]
    state.n = state.n[:, used]
    state.cnt, state.s1, state.s2 = state.cnt[used], state.s1[used], state.s2[used]


def dp_audit(state: DPState) -> list[str]:
    bad = []
    counts = np.bincount(state.z, minlength=state.K)
    if counts.shape[0] != state.K or not np.array_equal(counts, state.n[0]):
        bad.append("cluster sizes differ from recomputation")
    if state.n[0, -1] != 0:
        bad.append("trailing cluster not empty")
    if np.any(state.n[0, :-1] == 0):
        bad.append("non-trailing empty cluster")
    cnt, s1, s2 = _kernels.recompute_stats(state.X, state.z, state.K)
    if not (np.array_equal(cnt, state.cnt) and np.allclose(s1, state.s1)
            and np.allclose(s2, state.s2)):
        bad.append("statistics differ from recomputation")
    return bad


def init_dp(X, prior: BasePrior | None = None, alpha: float = 1.0, rng=None) -> DPState:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("DP mixture needs at least one observation")
    d = X.shape[1]
    prior = (prior or default_prior(X)).broadcast(d)
    rng = rng if rng is not None else np.random.default_rng()
    state = DPState(X, np.full(X.shape[0], -1, dtype=np.int64), np.zeros((1, 1), dtype=np.int64),
                    np.zeros(1, dtype=np.int64), np.zeros((1, d)), np.zeros((1, d)),
                    float(alpha), prior, rng)
    _dp_sweep(state)
    return state


def dp_step(state: DPState, hyper=(1.0, 1.0), random_scan=False) -> DPState:
    """Collapsed CRP sweep, optional concentration update (Gamma(a, b) prior
    given as ``hyper``; None keeps alpha fixed), then pruning."""
    _dp_sweep(state, random_scan=random_scan)
    _dp_prune(state)
    if hyper is not None:
        state.alpha = sample_concentration(state.alpha, state.K - 1, [state.X.shape[0]],
                                           hyper[0], hyper[1], state.rng)
    state.iteration += 1
    return state


def dp_sample(state: DPState) -> PosteriorSample:
    mu, sigma2 = sample_params(state.prior, state.cnt, state.s1, state.s2, state.rng)
    return PosteriorSample(model="dp", iter=state.iteration, z1=None, z2=None,
                           z3=state.z.tolist(), beta={}, mu=mu, sigma2=sigma2,
                           hypers={"alpha": state.alpha})


def run_dp_chain(observations, prior: BasePrior | None = None, alpha: float = 1.0,
                 config: ChainConfig | None = None, hyper=(1.0, 1.0)) -> list[PosteriorSample]:
    """Collapsed Gibbs for a DP mixture of diagonal Normals.

    ``hyper`` is the Gamma(shape, rate) prior on alpha, or None to hold alpha
    at its initial value.
    """
    config = config or ChainConfig()
    rng = np.random.default_rng(config.seed)
    state = init_dp(observations, prior, alpha, rng)
    hyper = hyper if config.hyper_sampling else None
    samples = []
    total = config.burn_in + config.thin * config.n_samples
    for it in range(1, total + 1):
        dp_step(state, hyper, config.random_scan)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            samples.append(dp_sample(state))
    return samples


# -- nested DP ----------------------------------------------------------------

def _log_beta(a, b, rng):
    """log X and log(1 - X) for X ~ Beta(a, b), accurate when either is tiny."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    # G(s) = G(s + 1) * U^(1/s) keeps log-gamma draws finite for small shapes
    la = np.log(rng.gamma(a + 1.0)) + np.log(rng.random(a.shape)) / a
    lb = np.log(rng.gamma(b + 1.0)) + np.log(rng.random(b.shape)) / b
    tot = np.logaddexp(la, lb)
    return la - tot, lb - tot


def _sticks_to_logweights(logv, log1m):
    """Stick fractions (in log space) along the last axis -> log weights."""
    rest = np.concatenate([np.zeros(logv.shape[:-1] + (1,)),
                           np.cumsum(log1m, axis=-1)[..., :-1]], axis=-1)
    return logv + rest


def _sample_sticks(counts, conc, rng):
    """Truncated stick-breaking posterior along the last axis.

    Returns (log v, log(1 - v)); the last stick is 1.
    """
    tail = np.cumsum(counts[..., ::-1], axis=-1)[..., ::-1]
    after = tail - counts  # items in later sticks
    logv, log1m = _log_beta(1.0 + counts, np.expand_dims(conc, -1) + after, rng)
    logv[..., -1] = 0.0
    log1m[..., -1] = -np.inf
    return logv, log1m


def _categorical_rows(logp, rng):
    p = np.exp(logp - logp.max(axis=1, keepdims=True))
    c = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0])[:, None] * c[:, -1:]
    return np.minimum((c <= u).sum(axis=1), p.shape[1] - 1)


@dataclass
class NDPState:
    X: np.ndarray
    offsets: np.ndarray
    obs_group: np.ndarray
    zeta: np.ndarray       # (J,) top atom of each group
    xi: np.ndarray         # (N,) private base atom within the group's top atom
    v_top: tuple           # (log v, log(1 - v)), each (Kt,)
    v_bottom: tuple        # each (Kt, Kb)
    mu: np.ndarray         # (Kt, Kb, d)
    sigma2: np.ndarray
    alpha: float
    beta: float
    prior: BasePrior
    rng: np.random.Generator
    iteration: int = 0

    @property
    def K_top(self) -> int:
        return self.mu.shape[0]

    @property
    def K_bottom(self) -> int:
        return self.mu.shape[1]

    def log_top_weights(self) -> np.ndarray:
        return _sticks_to_logweights(*self.v_top)

    def log_bottom_weights(self) -> np.ndarray:
        return _sticks_to_logweights(*self.v_bottom)

    def top_weights(self) -> np.ndarray:
        return np.exp(self.log_top_weights())

    def bottom_weights(self) -> np.ndarray:
        return np.exp(self.log_bottom_weights())

    def global_atoms(self) -> np.ndarray:
        """Flat atom index of every observation: top * K_bottom + bottom."""
        return self.zeta[self.obs_group] * self.K_bottom + self.xi


def _ndp_stats(state: NDPState):
    Kt, Kb, d = state.mu.shape
    cnt, s1, s2 = _kernels.recompute_stats(state.X, state.global_atoms(), Kt * Kb)
    return cnt.reshape(Kt, Kb), s1.reshape(Kt, Kb, d), s2.reshape(Kt, Kb, d)


def _ndp_update_params(state: NDPState, hyper):
    Kt, Kb, d = state.mu.shape
    rng = state.rng
    cnt, s1, s2 = _ndp_stats(state)
    m_top = np.bincount(state.zeta, minlength=Kt)
    state.v_top = _sample_sticks(m_top.astype(float), np.asarray(state.alpha), rng)
    state.v_bottom = _sample_sticks(cnt.astype(float), np.full(Kt, state.beta), rng)
    mu, s2_ = sample_params(state.prior, cnt.reshape(-1), s1.reshape(-1, d), s2.reshape(-1, d), rng)
    state.mu, state.sigma2 = mu.reshape(Kt, Kb, d), s2_.reshape(Kt, Kb, d)
    if hyper is None:
        return
    # Each concentration is drawn with the sticks that carry no data summed
    # out, then those sticks are redrawn from their prior: a blocked update
    # that avoids the slow random walk of conditioning on hundreds of
    # prior-only sticks.
    a, b = hyper
    last = int(np.max(np.nonzero(m_top)[0]))
    n_top = min(last + 1, Kt - 1)
    state.alpha = float(rng.gamma(a + n_top, 1.0 / (b - state.v_top[1][:n_top].sum())))
    if n_top < Kt - 1:
        lv, l1 = _log_beta(np.ones(Kt - 1 - n_top), np.full(Kt - 1 - n_top, state.alpha), rng)
        state.v_top[0][n_top:-1], state.v_top[1][n_top:-1] = lv, l1
    used = m_top > 0
    lb = state.v_bottom[1][used, :-1]
    state.beta = float(rng.gamma(a + lb.size, 1.0 / (b - lb.sum())))
    free = int(np.count_nonzero(~used))
    if free:
        lv, l1 = _log_beta(np.ones((free, Kb - 1)), np.full((free, Kb - 1), state.beta), rng)
        state.v_bottom[0][~used, :-1], state.v_bottom[1][~used, :-1] = lv, l1


def init_ndp(groups, K_top=20, K_bottom=15, prior: BasePrior | None = None,
             alpha=1.0, beta=1.0, rng=None) -> NDPState:
    if K_top < 2 or K_bottom < 2:
        raise ValueError("NDP truncation levels must be >= 2")
    groups = [np.asarray(g, dtype=float).reshape(len(g), -1) for g in groups]
    X = np.concatenate(groups, axis=0)
    d = X.shape[1]
    prior = (prior or default_prior(X)).broadcast(d)
    rng = rng if rng is not None else np.random.default_rng()
    offsets = np.concatenate([[0], np.cumsum([len(g) for g in groups])]).astype(np.int64)
    obs_group = np.repeat(np.arange(len(groups)), np.diff(offsets)).astype(np.int64)
    # every group starts in a random top atom with random private atoms
    zeta = rng.integers(0, K_top, size=len(groups)).astype(np.int64)
    xi = rng.integers(0, K_bottom, size=X.shape[0]).astype(np.int64)
    half = np.log(0.5)
    state = NDPState(X, offsets, obs_group, zeta, xi, (np.full(K_top, half), np.full(K_top, half)),
                     (np.full((K_top, K_bottom), half), np.full((K_top, K_bottom), half)),
                     np.zeros((K_top, K_bottom, d)),
                     np.ones((K_top, K_bottom, d)), float(alpha), float(beta), prior, rng)
    _ndp_update_params(state, None)
    return state


def ndp_step(state: NDPState, hyper=(1.0, 1.0)) -> NDPState:
    """Blocked Gibbs: group indicators (private atoms summed out), observation
    indicators within each group's top atom, sticks, atom parameters, and
    optionally the two concentrations."""
    rng = state.rng
    logw_b = state.log_bottom_weights()
    mix = _kernels.nested_mixture_loglik(state.X, logw_b, state.mu, state.sigma2)  # (N, Kt)
    group_ll = np.add.reduceat(mix, state.offsets[:-1], axis=0)
    state.zeta = _categorical_rows(group_ll + state.log_top_weights(), rng)
    # observation indicators within the chosen top atom
    top = state.zeta[state.obs_group]
    mu, s2 = state.mu[top], state.sigma2[top]           # (N, Kb, d)
    ll = -0.5 * np.sum(np.log(2 * np.pi * s2) + (state.X[:, None, :] - mu) ** 2 / s2, axis=2)
    state.xi = _categorical_rows(ll + logw_b[top], rng)
    _ndp_update_params(state, hyper)
    state.iteration += 1
    return state


def ndp_audit(state: NDPState) -> list[str]:
    bad = []
    g = state.global_atoms()
    top_of_atom = g // state.K_bottom
    if not np.array_equal(top_of_atom, state.zeta[state.obs_group]):
        bad.append("observation uses a base atom outside its group's top atom")
    for name, w in (("top", state.top_weights()), ("bottom", state.bottom_weights())):
        if np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-12):
            bad.append(f"{name} weights do not sum to 1")
    return bad


def ndp_sample(state: NDPState) -> PosteriorSample:
    d = state.X.shape[1]
    g = state.global_atoms()
    z3 = [g[state.offsets[j]:state.offsets[j + 1]].tolist() for j in range(len(state.zeta))]
    return PosteriorSample(
        model="ndp", iter=state.iteration, z1=None, z2=state.zeta.tolist(), z3=z3,
        beta={"top": state.top_weights(), "bottom": state.bottom_weights()},
        mu=state.mu.reshape(-1, d).copy(), sigma2=state.sigma2.reshape(-1, d).copy(),
        hypers={"alpha": state.alpha, "beta": state.beta},
        extra={"K_top": state.K_top, "K_bottom": state.K_bottom})


def run_ndp_chain(groups, K_top: int = 20, K_bottom: int = 15, prior: BasePrior | None = None,
                  config: ChainConfig | None = None, hyper=(1.0, 1.0),
                  alpha: float = 1.0, beta: float = 1.0) -> list[PosteriorSample]:
    """Truncated nested DP fitted by blocked Gibbs sampling.

    Each of the ``K_top`` group-level atoms owns ``K_bottom`` private Normal
    atoms; nothing is shared between top atoms.
    """
    config = config or ChainConfig()
    rng = np.random.default_rng(config.seed)
    state = init_ndp(groups, K_top, K_bottom, prior, alpha, beta, rng)
    hyper = hyper if config.hyper_sampling else None
    samples = []
    total = config.burn_in + config.thin * config.n_samples
    for it in range(1, total + 1):
        ndp_step(state, hyper)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            samples.append(ndp_sample(state))
    return samples
