"""Compiled inner loops.

Randomness is drawn by the caller from a ``numpy.random.Generator`` and
passed in as uniforms, so results depend only on the caller's generator.
"""

import math

import numpy as np
from numba import njit

LOG_PI = math.log(math.pi)
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True, nogil=True)
def refresh_predictive(k, cnt, s1, s2, kappa0, mu0, nu0, nus0, tc, tloc, tden, thalf):
    """Cache Student-t constants of atom k's posterior predictive."""
    nk = cnt[k]
    for j in range(s1.shape[1]):
        kn = kappa0[j] + nk
        mun = (kappa0[j] * mu0[j] + s1[k, j]) / kn
        nun = nu0[j] + nk
        if nk > 0:
            centered = s2[k, j] - s1[k, j] * s1[k, j] / nk
            if centered < 0.0:
                centered = 0.0
            dev = s1[k, j] - nk * mu0[j]
            shift = kappa0[j] * dev * dev / (kn * nk)
        else:
            centered = 0.0
            shift = 0.0
        sn2 = (nus0[j] + centered + shift) / nun
        scale2 = sn2 * (1.0 + 1.0 / kn)
        tc[k, j] = (math.lgamma(0.5 * (nun + 1.0)) - math.lgamma(0.5 * nun)
                    - 0.5 * (math.log(nun) + LOG_PI + math.log(scale2)))
        tloc[k, j] = mun
        tden[k, j] = nun * scale2
        thalf[k, j] = 0.5 * (nun + 1.0)


@njit(cache=True, nogil=True)
def assign_sweep(X, z, grp, order, n, cnt, s1, s2, beta, K, alpha, gamma, crp,
                 kappa0, mu0, nu0, nus0, rb, use_lik, mu, sig2, fresh_mu, fresh_sig2,
                 u, ub):
    """One Gibbs pass over observation-to-atom indicators.

    Atoms 0..K-1 are live, K-1 being the trailing empty atom.  For item i in
    ``order`` with restaurant r = grp[i] the prior weight of atom k is
    n[r, k] + alpha * beta[k] (``crp`` False) or the plain CRP weight
    n[r, k] / alpha-for-new (``crp`` True).  The likelihood term is the
    posterior predictive (``rb``) or the Normal density under (mu, sig2),
    where the trailing atom uses a fresh prior draw per item.  Items with
    z[i] < 0 are unassigned and only get added.  Choosing the trailing atom
    instantiates it and appends a new trailing atom, splitting beta's last
    entry with b = 1 - (1 - ub[i])^(1/gamma) ~ Beta(1, gamma).

    Arrays must have capacity for K + len(order) atoms.  Returns the new K.
    """
    d = X.shape[1]
    cap = cnt.shape[0]
    tc = np.empty((cap, d))
    tloc = np.empty((cap, d))
    tden = np.empty((cap, d))
    thalf = np.empty((cap, d))
    logw = np.empty(cap)
    if rb:
        for k in range(K):
            refresh_predictive(k, cnt, s1, s2, kappa0, mu0, nu0, nus0, tc, tloc, tden, thalf)
    for idx in range(order.shape[0]):
        i = order[idx]
        r = grp[i]
        old = z[i]
        if old >= 0:
            cnt[old] -= 1
            n[r, old] -= 1
            for j in range(d):
                s1[old, j] -= X[i, j]
                s2[old, j] -= X[i, j] * X[i, j]
            if cnt[old] == 0:
                for j in range(d):
                    s1[old, j] = 0.0
                    s2[old, j] = 0.0
            if rb:
                refresh_predictive(old, cnt, s1, s2, kappa0, mu0, nu0, nus0,
                                   tc, tloc, tden, thalf)
        if not rb:
            for j in range(d):
                mu[K - 1, j] = fresh_mu[i, j]
                sig2[K - 1, j] = fresh_sig2[i, j]
        top = -np.inf
        for k in range(K):
            if crp:
                w = n[r, k] if k < K - 1 else alpha
            else:
                w = n[r, k] + alpha * beta[k]
            lw = math.log(w) if w > 0.0 else -np.inf
            if use_lik and lw > -np.inf:
                acc = 0.0
                for j in range(d):
                    x = X[i, j]
                    if rb:
                        dev = x - tloc[k, j]
                        acc += tc[k, j] - thalf[k, j] * math.log1p(dev * dev / tden[k, j])
                    else:
                        dev = x - mu[k, j]
                        acc += -0.5 * (LOG_2PI + math.log(sig2[k, j]) + dev * dev / sig2[k, j])
                lw += acc
            logw[k] = lw
            if lw > top:
                top = lw
        total = 0.0
        for k in range(K):
            logw[k] = math.exp(logw[k] - top)
            total += logw[k]
        target = u[i] * total
        new = K - 1
        acc = 0.0
        for k in range(K):
            acc += logw[k]
            if target < acc:
                new = k
                break
        if new == K - 1:
            if not crp:
                b = 1.0 - (1.0 - ub[i]) ** (1.0 / gamma)
                rest = beta[K - 1]
                beta[K - 1] = b * rest
                beta[K] = (1.0 - b) * rest
            cnt[K] = 0
            for j in range(d):
                s1[K, j] = 0.0
                s2[K, j] = 0.0
            for rr in range(n.shape[0]):
                n[rr, K] = 0
            K += 1
            if rb:
                refresh_predictive(K - 1, cnt, s1, s2, kappa0, mu0, nu0, nus0,
                                   tc, tloc, tden, thalf)
        z[i] = new
        cnt[new] += 1
        n[r, new] += 1
        for j in range(d):
            s1[new, j] += X[i, j]
            s2[new, j] += X[i, j] * X[i, j]
        if rb:
            refresh_predictive(new, cnt, s1, s2, kappa0, mu0, nu0, nus0, tc, tloc, tden, thalf)
    return K


@njit(cache=True, nogil=True)
def recompute_stats(X, z, K):
    d = X.shape[1]
    cnt = np.zeros(K, dtype=np.int64)
    s1 = np.zeros((K, d))
    s2 = np.zeros((K, d))
    for i in range(X.shape[0]):
        k = z[i]
        cnt[k] += 1
        for j in range(d):
            s1[k, j] += X[i, j]
            s2[k, j] += X[i, j] * X[i, j]
    return cnt, s1, s2


@njit(cache=True, nogil=True)
def nested_mixture_loglik(X, logw, mu, sig2):
    """log sum_l w[k, l] N(x_i | mu[k, l], sig2[k, l]) for every item i and top atom k.

    ``logw`` is (Kt, Kb); ``mu``/``sig2`` are (Kt, Kb, d).  Returns (N, Kt).
    """
    N, d = X.shape
    Kt, Kb = logw.shape
    const = np.empty((Kt, Kb))
    for k in range(Kt):
        for l in range(Kb):
            c = logw[k, l]
            for j in range(d):
                c -= 0.5 * (LOG_2PI + math.log(sig2[k, l, j]))
            const[k, l] = c
    out = np.empty((N, Kt))
    terms = np.empty(Kb)
    for i in range(N):
        for k in range(Kt):
            top = -np.inf
            for l in range(Kb):
                t = const[k, l]
                for j in range(d):
                    dev = X[i, j] - mu[k, l, j]
                    t -= 0.5 * dev * dev / sig2[k, l, j]
                terms[l] = t
                if t > top:
                    top = t
            if top == -np.inf:
                out[i, k] = -np.inf
                continue
            acc = 0.0
            for l in range(Kb):
                acc += math.exp(terms[l] - top)
            out[i, k] = top + math.log(acc)
    return out
