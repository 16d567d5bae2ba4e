import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mlchdp.data import HierDataset, Patient, Seizure

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(sizes, d=1, seed=0, spread=5.0):
    """Ragged dataset; ``sizes[t][j]`` is the channel count of seizure j of patient t."""
    r = np.random.default_rng(seed)
    patients = []
    for t, row in enumerate(sizes):
        seizures = [Seizure(f"s{j}", r.normal(r.normal(0, spread), 1.0, size=(n, d)))
                    for j, n in enumerate(row)]
        patients.append(Patient(f"p{t}", seizures))
    return HierDataset(patients, d)


@pytest.fixture
def small_dataset():
    return make_dataset([[6, 4, 5], [3, 7], [5, 5, 2, 4]], d=2, seed=3)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
