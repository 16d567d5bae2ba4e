"""
Distributions over groups: MLC-HDP vs nested DP
===============================================

Forty groups of 100 draws each come from four one-dimensional mixtures.
Both models try to discover that there are only a handful of distinct
group distributions, and then estimate each one.  Short chains here;
the acceptance suite runs the long version.
"""

import numpy as np

from mlchdp.data import simulate_table1
from mlchdp.evaluation import cluster_count_posterior
from mlchdp.experiments import fit_table1_chain, kl_by_distribution
from mlchdp.sampler import ChainConfig

# %% data: 10 groups from each of T1..T4
ds, labels = simulate_table1(10, 100, seed=2024)
print(f"{len(labels)} groups, {ds.flatten()[0].shape[0]} observations")

# %% one short chain of each model
cfg = ChainConfig(burn_in=200, thin=5, n_samples=40, seed=7)
fits = {m: fit_table1_chain(m, ds, cfg) for m in ("mlchdp", "ndp")}

# %% how many group-level clusters does each posterior believe in?
for model, samples in fits.items():
    hist = cluster_count_posterior(samples, "top")
    print(model, {k: round(v, 2) for k, v in hist.items()})

# %% density recovery: KL(true || posterior mean density), averaged per distribution
for model, samples in fits.items():
    kl = kl_by_distribution(samples, labels)
    print(model, {k: round(v, 4) for k, v in kl.items()})

# %% the groups generated by the same mixture should share a cluster
s = fits["mlchdp"][-1]
types = np.array([z for patient in s.z2 for z in patient])
for name in sorted(set(labels)):
    print(name, np.bincount(types[[lab == name for lab in labels]]))
