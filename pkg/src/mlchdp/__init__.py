"""Multi-level clustering hierarchical Dirichlet process (MLC-HDP).

Simultaneous nonparametric clustering of patients, seizures and channel
observations by collapsed Gibbs sampling, with DP-mixture and nested-DP
comparison models, evaluation metrics and an EEG-style feature pipeline.
"""

__version__ = "0.1.0"

from .base import BaseAtom, BasePrior, SuffStats, default_prior  # noqa: E402
from .data import HierDataset, Patient, Seizure, load_dataset, save_dataset  # noqa: E402
from .data import simulate_hierarchy, simulate_table1  # noqa: E402
from .sampler import ChainConfig, Priors, init_state, run_chain, step  # noqa: E402
from .samples import PosteriorSample, read_samples, write_samples  # noqa: E402

__all__ = [
    "BaseAtom", "BasePrior", "SuffStats", "default_prior",
    "HierDataset", "Patient", "Seizure", "load_dataset", "save_dataset",
    "simulate_hierarchy", "simulate_table1",
    "ChainConfig", "Priors", "init_state", "run_chain", "step",
    "PosteriorSample", "read_samples", "write_samples",
]
