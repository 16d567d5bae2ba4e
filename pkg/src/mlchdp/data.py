"""Nested patient -> seizure -> channel datasets.

A :class:`HierDataset` holds ragged three-level data: every patient has one
or more seizures and every seizure one or more ``d``-dimensional channel
observations.  Two-level data (groups of observations) is stored as a single
dummy patient whose seizures are the groups.

Truth labels produced by the generators are returned next to the dataset and
never stored inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or inconsistent datasets."""


@dataclass
class Seizure:
    id: str
    observations: np.ndarray  # (N, d)

    def __post_init__(self):
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=float))

    @property
    def n(self) -> int:
        return self.observations.shape[0]


@dataclass
class Patient:
    id: str
    seizures: list[Seizure] = field(default_factory=list)


@dataclass
class HierDataset:
    """Ragged three-level dataset.

    Attributes
    ----------
    patients : list of Patient
    d : int
        Feature dimension shared by every observation.
    """

    patients: list[Patient]
    d: int

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d < 1:
            raise DatasetError("dimension must be positive")
        if not self.patients:
            raise DatasetError("empty dataset: no patients")
        for p in self.patients:
            if not p.seizures:
                raise DatasetError(f"empty patient {p.id!r}: no seizures")
            for s in p.seizures:
                obs = s.observations
                if obs.size == 0 or obs.shape[0] == 0:
                    raise DatasetError(f"empty seizure {s.id!r} in patient {p.id!r}")
                if obs.ndim != 2 or obs.shape[1] != self.d:
                    raise DatasetError(
                        f"dimension mismatch in seizure {s.id!r}: expected d={self.d}, "
                        f"got shape {obs.shape}")
                if not np.all(np.isfinite(obs)):
                    raise DatasetError(f"non-finite observation in seizure {s.id!r}")

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_seizures(self) -> int:
        return sum(len(p.seizures) for p in self.patients)

    @property
    def n_obs(self) -> int:
        return sum(s.n for p in self.patients for s in p.seizures)

    def seizures(self) -> list[Seizure]:
        """All seizures in patient-major order."""
        return [s for p in self.patients for s in p.seizures]

    def flatten(self):
        """Flat arrays used by the samplers.

        Returns
        -------
        X : (N, d) array
        seizure_offsets : (S + 1,) int array; seizure s owns X[off[s]:off[s+1]]
        patient_offsets : (T + 1,) int array; patient t owns seizures
            patient_offsets[t]:patient_offsets[t+1]
        """
        sz = self.seizures()
        X = np.concatenate([s.observations for s in sz], axis=0)
        seizure_offsets = np.concatenate([[0], np.cumsum([s.n for s in sz])]).astype(np.int64)
        patient_offsets = np.concatenate(
            [[0], np.cumsum([len(p.seizures) for p in self.patients])]).astype(np.int64)
        return X, seizure_offsets, patient_offsets

    def subset(self, keep: dict[int, list[int]]) -> "HierDataset":
        """New dataset keeping, for each patient index, the listed seizure indices.

        Patients absent from ``keep`` are dropped.
        """
        patients = []
        for t, p in enumerate(self.patients):
            if t not in keep:
                continue
            patients.append(Patient(p.id, [p.seizures[j] for j in keep[t]]))
        return HierDataset(patients, self.d)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "patients": [
                {"id": p.id,
                 "seizures": [{"id": s.id, "observations": s.observations.tolist()}
                              for s in p.seizures]}
                for p in self.patients
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HierDataset":
        try:
            patients = []
            for p in doc["patients"]:
                seizures = []
                for s in p["seizures"]:
                    obs = s["observations"]
                    if len(obs) == 0:
                        raise DatasetError(f"empty seizure {s.get('id')!r}")
                    lengths = {len(o) for o in obs}
                    if len(lengths) != 1:
                        raise DatasetError(f"dimension mismatch inside seizure {s.get('id')!r}")
                    seizures.append(Seizure(str(s["id"]), np.asarray(obs, dtype=float)))
                patients.append(Patient(str(p["id"]), seizures))
            declared = doc.get("d")
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"malformed dataset document: {exc}") from exc
        dims = {s.observations.shape[1] for p in patients for s in p.seizures}
        if len(dims) > 1:
            raise DatasetError(f"dimension mismatch across observations: {sorted(dims)}")
        d = dims.pop() if dims else (declared or 0)
        if declared is not None and declared != d:
            raise DatasetError(f"dimension mismatch: declared d={declared}, observed d={d}")
        return cls(patients, int(d))


def save_dataset(dataset: HierDataset, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(dataset.to_dict()))


def load_dataset(path) -> HierDataset:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"could not parse {path}: {exc}") from exc
    return HierDataset.from_dict(doc)


def from_groups(groups, ids=None) -> HierDataset:
    """Two-level data as a single dummy patient whose seizures are the groups."""
    groups = [np.asarray(g, dtype=float).reshape(len(g), -1) for g in groups]
    ids = ids or [f"g{i}" for i in range(len(groups))]
    d = groups[0].shape[1]
    return HierDataset([Patient("root", [Seizure(i, g) for i, g in zip(ids, groups)])], d)


# -- mixtures ---------------------------------------------------------------

@dataclass(frozen=True)
class MixtureSpec:
    """Univariate Gaussian mixture given as (weight, mean, variance) triples."""

    components: tuple

    def __post_init__(self):
        w = np.array([c[0] for c in self.components], dtype=float)
        s2 = np.array([c[2] for c in self.components], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if np.any(s2 <= 0):
            raise ValueError("mixture variances must be positive")

    @property
    def weights(self):
        return np.array([c[0] for c in self.components])

    @property
    def means(self):
        return np.array([c[1] for c in self.components])

    @property
    def variances(self):
        return np.array([c[2] for c in self.components])

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def var(self) -> float:
        second = self.weights @ (self.variances + self.means ** 2)
        return float(second - self.mean() ** 2)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        dens = np.exp(-0.5 * (x - self.means) ** 2 / self.variances) / np.sqrt(
            2 * np.pi * self.variances)
        return dens @ self.weights

    def sample(self, n: int, rng) -> np.ndarray:
        comp = rng.choice(len(self.components), size=n, p=self.weights)
        return rng.normal(self.means[comp], np.sqrt(self.variances[comp]))


# Gaussian mixtures of the four-distribution simulation study.
TABLE1 = {
    "T1": MixtureSpec(((0.75, 0.0, 1.0), (0.25, 3.0, 2.0))),
    "T2": MixtureSpec(((0.55, 0.0, 1.0), (0.45, 3.0, 2.0))),
    "T3": MixtureSpec(((0.40, 0.0, 1.0), (0.30, -2.0, 2.0), (0.30, 2.0, 2.0))),
    "T4": MixtureSpec(((0.39, 0.0, 1.0), (0.29, -2.0, 2.0), (0.29, 2.0, 2.0),
                       (0.03, 10.0, 1.0))),
}


def simulate_table1(samples_per_dist: int, obs_per_sample: int, seed: int):
    """Groups drawn from the four simulation-study mixtures.

    Returns the dataset (one dummy patient, one seizure per group) and the
    list of generating distribution names, one per group.
    """
    if samples_per_dist < 1 or obs_per_sample < 1:
        raise ValueError("samples_per_dist and obs_per_sample must be >= 1")
    rng = np.random.default_rng(seed)
    groups, labels = [], []
    for name, spec in TABLE1.items():
        for _ in range(samples_per_dist):
            groups.append(spec.sample(obs_per_sample, rng)[:, None])
            labels.append(name)
    return from_groups(groups), labels


@dataclass
class HierarchyConfig:
    """Finite ground truth for :func:`simulate_hierarchy`.

    ``seizures`` and ``channels`` are either one int for every patient/seizure
    or a per-patient list (``channels`` may also be a per-patient list of
    per-seizure lists).
    """

    n_patients: int
    seizures: int | list
    channels: int | list
    patient_type_weights: list
    seizure_type_weights: list   # one row per patient type
    channel_weights: list        # one row per seizure type
    atom_means: list             # (A, d)
    atom_variances: list         # (A, d)
    patient_types: list | None = None  # optional fixed patient types


@dataclass
class HierarchyTruth:
    patient_types: np.ndarray
    seizure_types: list          # per patient, int array
    channel_atoms: list          # per patient, list of int arrays


def _check_multinomial(w, what):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"invalid multinomial for {what}: {w}")
    return w / w.sum()


def simulate_hierarchy(config: HierarchyConfig, seed: int):
    """Ancestral sampling of a finite three-level mixture.

    patient type ~ Cat(patient_type_weights); seizure type ~ Cat(row of the
    patient type); channel atom ~ Cat(row of the seizure type);
    x ~ N(atom mean, atom variance).
    """
    rng = np.random.default_rng(seed)
    T = config.n_patients
    if T < 1:
        raise ValueError("n_patients must be >= 1")
    pw = _check_multinomial(config.patient_type_weights, "patient types")
    sw = [_check_multinomial(r, "seizure types") for r in config.seizure_type_weights]
    cw = [_check_multinomial(r, "channel atoms") for r in config.channel_weights]
    if len(sw) != len(pw):
        raise ValueError("need one seizure-type row per patient type")
    if any(len(r) != len(cw) for r in sw):
        raise ValueError("seizure-type rows must cover every seizure type")
    means = np.atleast_2d(np.asarray(config.atom_means, dtype=float))
    variances = np.atleast_2d(np.asarray(config.atom_variances, dtype=float))
    if means.shape != variances.shape or np.any(variances <= 0):
        raise ValueError("atom means/variances must share a shape and variances be positive")
    if any(len(r) != means.shape[0] for r in cw):
        raise ValueError("channel rows must cover every atom")
    d = means.shape[1]

    def per_patient(v, t):
        return v[t] if isinstance(v, (list, tuple)) else v

    if config.patient_types is not None:
        ptypes = np.asarray(config.patient_types, dtype=int)
    else:
        ptypes = rng.choice(len(pw), size=T, p=pw)
    patients, stypes, catoms = [], [], []
    for t in range(T):
        J = per_patient(config.seizures, t)
        if J < 1:
            raise ValueError("every patient needs >= 1 seizure")
        st = rng.choice(len(cw), size=J, p=sw[ptypes[t]])
        seizures, atoms_t = [], []
        for j in range(J):
            nch = per_patient(config.channels, t)
            if isinstance(nch, (list, tuple)):
                nch = nch[j]
            if nch < 1:
                raise ValueError("every seizure needs >= 1 channel")
            a = rng.choice(means.shape[0], size=nch, p=cw[st[j]])
            x = rng.normal(means[a], np.sqrt(variances[a]))
            seizures.append(Seizure(f"s{j}", x.reshape(nch, d)))
            atoms_t.append(a)
        patients.append(Patient(f"p{t}", seizures))
        stypes.append(st)
        catoms.append(atoms_t)
    return HierDataset(patients, d), HierarchyTruth(ptypes, stypes, catoms)


def desk_hierarchy_config() -> HierarchyConfig:
    """Desk-scale three-level fixture: 5 patients with 6-10 seizures of 30
    two-dimensional channels, 3 seizure types over 4 channel atoms.

    Patients 0 and 1 share a patient type whose seizures use their own pair
    of atoms; each of those sits 2 sd from one of the atoms the other three
    patients use.
    """
    return HierarchyConfig(
        n_patients=5,
        seizures=[10, 8, 7, 6, 9],
        channels=30,
        patient_type_weights=[0.4, 0.6],
        seizure_type_weights=[[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]],
        channel_weights=[[0.8, 0.2, 0.0, 0.0], [0.2, 0.8, 0.0, 0.0], [0.0, 0.0, 0.6, 0.4]],
        atom_means=[[0.0, 0.0], [3.0, 0.0], [0.8, 0.8], [3.8, 0.8]],
        atom_variances=[[0.3, 0.3]] * 4,
        patient_types=[0, 0, 1, 1, 1],
    )
