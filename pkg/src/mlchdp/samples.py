"""Posterior sample records and their JSON Lines serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODELS = ("mlchdp", "dp", "ndp")


@dataclass
class PosteriorSample:
    """One recorded MCMC draw.

    ``z2``/``z3`` are nested like the data: for the MLC-HDP ``z2[t][j]`` is the
    seizure type of seizure j of patient t and ``z3[t][j][i]`` the base atom of
    its channel i.  The DP stores a flat ``z3`` list; the NDP stores group
    indicators in ``z2`` (flat) and per-group lists in ``z3``.  ``mu`` and
    ``sigma2`` list every atom, the trailing empty one included.
    """

    model: str
    iter: int
    z1: list | None
    z2: list | None
    z3: list
    beta: dict
    mu: np.ndarray
    sigma2: np.ndarray
    hypers: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "model": self.model,
            "iter": int(self.iter),
            "z1": self.z1,
            "z2": self.z2,
            "z3": self.z3,
            "beta": {k: np.asarray(v).tolist() for k, v in self.beta.items()},
            "atoms": [{"mu": m.tolist(), "sigma2": s.tolist()}
                      for m, s in zip(np.asarray(self.mu), np.asarray(self.sigma2))],
            "hypers": {k: (np.asarray(v).tolist() if np.ndim(v) else float(v))
                       for k, v in self.hypers.items()},
        }
        if self.extra:
            doc["extra"] = self.extra
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PosteriorSample":
        model = doc.get("model", "mlchdp")
        if model not in MODELS:
            raise ValueError(f"unknown model tag {model!r}")
        atoms = doc["atoms"]
        return cls(
            model=model,
            iter=int(doc["iter"]),
            z1=doc.get("z1"),
            z2=doc.get("z2"),
            z3=doc["z3"],
            beta={k: np.asarray(v, dtype=float) for k, v in doc.get("beta", {}).items()},
            mu=np.array([a["mu"] for a in atoms], dtype=float),
            sigma2=np.array([a["sigma2"] for a in atoms], dtype=float),
            hypers=doc.get("hypers", {}),
            extra=doc.get("extra", {}),
        )

    # flat views -------------------------------------------------------------

    def group_labels(self) -> np.ndarray:
        """Cluster label of every group (seizure), patient-major."""
        if self.model == "mlchdp":
            return np.array([l for row in self.z2 for l in row], dtype=int)
        if self.model == "ndp":
            return np.asarray(self.z2, dtype=int)
        raise ValueError("a DP sample has no group level")

    def obs_labels(self) -> np.ndarray:
        if self.model == "mlchdp":
            return np.array([k for p in self.z3 for s in p for k in s], dtype=int)
        if self.model == "ndp":
            return np.array([k for g in self.z3 for k in g], dtype=int)
        return np.asarray(self.z3, dtype=int)

    def group_obs_labels(self) -> list:
        """Per-group arrays of observation labels."""
        if self.model == "mlchdp":
            return [np.asarray(s, dtype=int) for p in self.z3 for s in p]
        if self.model == "ndp":
            return [np.asarray(g, dtype=int) for g in self.z3]
        return [np.asarray(self.z3, dtype=int)]


def write_samples(path, samples) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict()) + "\n")


def read_samples(path) -> list[PosteriorSample]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(PosteriorSample.from_dict(json.loads(line)))
    return out
