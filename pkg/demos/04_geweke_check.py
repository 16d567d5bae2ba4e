"""
Getting it right: a joint-distribution check of the sampler
===========================================================

Two ways to draw (parameters, data) from the joint: forward simulation
from the prior, and alternating one Gibbs step with a fresh draw of the
data.  If the Gibbs step leaves the posterior invariant, the two streams
have the same marginal for any statistic.
"""

import numpy as np

from mlchdp.base import BasePrior
from mlchdp.data import HierDataset, Patient, Seizure
from mlchdp.sampler import ChainConfig, Priors, resample_data, sample_prior_state, step

ds = HierDataset([Patient(f"p{t}", [Seizure(f"s{j}", np.zeros((5, 1))) for j in range(2)])
                  for t in range(2)], 1)
priors = Priors(base=BasePrior(1.0, 0.0, 10.0, 1.0))
cfg = ChainConfig(hyper_sampling=False)
rng = np.random.default_rng(0)
R = 3000


def stats(st):
    return st.X.mean(), (st.X ** 2).mean(), st.n_nonempty(2)


forward = np.array([stats(sample_prior_state(ds, priors, cfg, rng)) for _ in range(R)])

st = sample_prior_state(ds, priors, cfg, rng)
chain = []
for _ in range(R):
    step(st)
    resample_data(st)
    chain.append(stats(st))
chain = np.array(chain)

# %% compare means; the Gibbs stream is autocorrelated so use batch means
batches = chain.reshape(30, -1, 3).mean(axis=1)
se = np.sqrt(forward.var(axis=0, ddof=1) / R + batches.var(axis=0, ddof=1) / 30)
for name, a, b, s in zip(("mean x", "mean x^2", "atoms"), forward.mean(0), chain.mean(0), se):
    print(f"{name:9s} forward {a:7.3f}  gibbs {b:7.3f}  z {(a - b) / s:+.2f}")
