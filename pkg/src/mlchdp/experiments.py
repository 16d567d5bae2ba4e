"""Experiment drivers shared by the command line and the acceptance suite."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .base import default_prior
from .baselines import run_dp_chain, run_ndp_chain
from .data import TABLE1, HierDataset
from .evaluation import (dp_heldout_assign, kl_divergence, kl_grid, log_perplexity,
                         mlchdp_heldout_assign, posterior_density, GridDensity)
from .sampler import ChainConfig, Priors, run_chain

PREFIX_MODELS = ("M1", "M2", "M3")


def _channels(seizures):
    return np.concatenate([s.observations for s in seizures], axis=0)


def prefix_split(dataset: HierDataset, patient: int, j: int):
    """Training dataset (all other patients plus the first j seizures of
    ``patient``) and the held-out seizures j.. of ``patient``."""
    J = len(dataset.patients[patient].seizures)
    if not 1 <= j < J:
        raise ValueError(f"prefix must be in 1..{J - 1}")
    keep = {t: list(range(len(p.seizures))) for t, p in enumerate(dataset.patients)}
    keep[patient] = list(range(j))
    heldout = dataset.patients[patient].seizures[j:]
    return dataset.subset(keep), heldout


def prefix_log_perplexity(dataset: HierDataset, patient: int, j: int, model: str,
                          config: ChainConfig, priors: Priors | None = None,
                          assign: str = "map") -> float:
    """Held-out log perplexity for one prefix length, averaged over the
    recorded samples of one chain.  ``assign`` selects the held-out
    assignment rule ("map" or "expected").

    M1: DP mixture on the patient's first j seizures.  M2: DP mixture on
    those plus every other patient's channels, pooled.  M3: MLC-HDP on the
    same data as M2 with the hierarchy kept.
    """
    train, heldout = prefix_split(dataset, patient, j)
    xs = [s.observations for s in heldout]
    priors = priors or Priors()
    # one prior for all three models, scaled to the full training pool
    base = priors.base
    if base is None:
        base = default_prior(train.flatten()[0])
    if model == "M1":
        samples = run_dp_chain(_channels(train.patients[patient].seizures), base, config=config,
                               hyper=(priors.hyper_a, priors.hyper_b))
        labels = [dp_heldout_assign(s, xs, assign) for s in samples]
    elif model == "M2":
        samples = run_dp_chain(_channels(train.seizures()), base, config=config,
                               hyper=(priors.hyper_a, priors.hyper_b))
        labels = [dp_heldout_assign(s, xs, assign) for s in samples]
    elif model == "M3":
        samples = run_chain(train, replace(priors, base=base), config)
        labels = [mlchdp_heldout_assign(s, xs, patient, assign) for s in samples]
    else:
        raise ValueError(f"unknown model {model!r}; expected one of {PREFIX_MODELS}")
    return float(np.mean([log_perplexity(xs, a, s.mu, s.sigma2)
                          for s, a in zip(samples, labels)]))


def growing_prefix(dataset: HierDataset, patient: int, config: ChainConfig,
                   priors: Priors | None = None, models=PREFIX_MODELS, prefixes=None,
                   assign: str = "map") -> dict:
    """{model: [log PP at prefix 1, 2, ...]} for one chain configuration."""
    J = len(dataset.patients[patient].seizures)
    prefixes = list(prefixes or range(1, J))
    return {m: [prefix_log_perplexity(dataset, patient, j, m, config, priors, assign) for j in prefixes]
            for m in models}


# -- simulation study --------------------------------------------------------------

def true_density(name: str, grid=None) -> GridDensity:
    grid = kl_grid() if grid is None else np.asarray(grid, dtype=float)
    return GridDensity(grid, TABLE1[name].pdf(grid))


def kl_by_distribution(samples, labels, grid=None) -> dict:
    """Mean over groups of KL(true || posterior mean density), per generating distribution."""
    grid = kl_grid() if grid is None else np.asarray(grid, dtype=float)
    out = {}
    for name in sorted(set(labels)):
        truth = true_density(name, grid)
        vals = [kl_divergence(truth, posterior_density(samples, grid, g))
                for g, lab in enumerate(labels) if lab == name]
        out[name] = float(np.mean(vals))
    return out


def fit_table1_chain(model: str, dataset: HierDataset, config: ChainConfig,
                     priors: Priors | None = None, ndp_truncation=(20, 15), hyper=(1.0, 1.0)):
    """One chain of the simulation study for "mlchdp" (two-level) or "ndp"."""
    if model == "mlchdp":
        return run_chain(dataset, priors, replace(config, levels_enabled=2))
    if model == "ndp":
        groups = [s.observations for s in dataset.seizures()]
        base = priors.base if priors is not None else None
        return run_ndp_chain(groups, *ndp_truncation, prior=base, config=config, hyper=hyper)
    raise ValueError(f"unknown model {model!r}")
