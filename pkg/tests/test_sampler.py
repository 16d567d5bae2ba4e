import numpy as np
import pytest
from scipy import stats as sps

from conftest import make_dataset
from mlchdp.base import BasePrior
from mlchdp.data import HierDataset, Patient, Seizure
from mlchdp.dp import group_marginal_loglik_rows, sample_parent_weights, sample_table_counts
from mlchdp.sampler import (CHANNEL, PATIENT, SEIZURE, ChainConfig, Priors, audit,
                            channel_log_scores, init_state, prune, relabel, run_chain,
                            sample_channel_indicators, sample_level_params,
                            sample_patient_indicators, sample_seizure_indicators, step)
from mlchdp.samples import read_samples, write_samples


def _one(x):
    return HierDataset([Patient("p", [Seizure("s", [[x]])])], 1)


def _state(ds, seed=0, **cfg):
    config = ChainConfig(seed=seed, **cfg)
    return init_state(ds, Priors(), config, np.random.default_rng(seed))


def test_init_single_observation():
    st = _state(_one(0.3))
    assert (st.n_nonempty(CHANNEL), st.n_nonempty(SEIZURE), st.n_nonempty(PATIENT)) == (1, 1, 1)
    assert all(lv.L == 2 for lv in st.levels)
    assert audit(st) == []


def test_init_audit_and_determinism(small_dataset):
    a, b = _state(small_dataset, seed=4), _state(small_dataset, seed=4)
    assert audit(a) == []
    for la, lb in zip(a.levels, b.levels):
        np.testing.assert_array_equal(la.z, lb.z)
        np.testing.assert_array_equal(la.beta, lb.beta)
    np.testing.assert_array_equal(a.mu, b.mu)


def test_single_observation_never_splits():
    st = _state(_one(1.0), seed=1)
    for _ in range(50):
        step(st)
        assert st.n_nonempty(CHANNEL) == 1 and st.K == 2


def test_distant_points_separate():
    # exact cohabitation probability from Student-t predictives is ~1e-7
    nu0 = 100.0
    pred = lambda x, k, m, nu, s2: sps.t.logpdf(x, nu, m, np.sqrt(s2 * (1 + 1 / k)))  # noqa: E731
    together = pred(100.0, 2.0, 0.0, nu0 + 1, nu0 / (nu0 + 1))
    apart = pred(100.0, 1.0, 0.0, nu0, 1.0)
    assert apart - together > 10
    ds = HierDataset([Patient("p", [Seizure("s", [[0.0], [100.0]])])], 1)
    pri = Priors(base=BasePrior(1.0, 0.0, nu0, 1.0))
    st = init_state(ds, pri, ChainConfig(seed=2), np.random.default_rng(2))
    same = 0
    for _ in range(100):
        step(st)
        z = st.levels[CHANNEL].z
        same += z[0] == z[1]
    assert same / 100 < 0.01


def test_channel_scores_normalise(small_dataset):
    st = _state(small_dataset)
    from mlchdp.dp import normalize_log_weights
    p = normalize_log_weights(channel_log_scores(st, 3))
    assert abs(p.sum() - 1.0) <= 1e-12


def _co_cluster_rate(ds, level, pairs, steps=300, seed=0):
    pri = Priors(base=BasePrior(1.0, 5.0, 3.0, 1.0))
    st = init_state(ds, pri, ChainConfig(seed=seed), np.random.default_rng(seed))
    hits = np.zeros(len(pairs))
    for _ in range(steps):
        step(st)
        z = st.levels[level].z
        hits += [z[a] == z[b] for a, b in pairs]
    return hits / steps


def test_seizures_with_shared_atoms_co_cluster():
    r = np.random.default_rng(3)
    near = lambda m: r.normal(m, 0.3, size=(15, 1))  # noqa: E731
    ds = HierDataset([Patient("p", [Seizure("a", near(0)), Seizure("b", near(0)),
                                    Seizure("c", near(10)), Seizure("d", near(10))])], 1)
    same, disjoint = _co_cluster_rate(ds, SEIZURE, [(0, 1), (0, 2)])
    assert same > disjoint


def test_patients_with_shared_types_co_cluster():
    r = np.random.default_rng(4)
    pat = lambda i, m: Patient(f"p{i}", [Seizure(f"s{j}", r.normal(m, 0.3, size=(10, 1)))  # noqa: E731
                                         for j in range(3)])
    ds = HierDataset([pat(0, 0), pat(1, 0), pat(2, 10), pat(3, 10)], 1)
    same, disjoint = _co_cluster_rate(ds, PATIENT, [(0, 1), (0, 2)])
    assert same > disjoint


def test_one_seizure_one_type():
    ds = HierDataset([Patient("p", [Seizure("s", np.linspace(-3, 3, 12)[:, None])])], 1)
    st = _state(ds, seed=5)
    for _ in range(30):
        step(st)
        assert st.n_nonempty(SEIZURE) == 1


def test_one_patient_one_type(small_dataset):
    ds = HierDataset(small_dataset.patients[:1], small_dataset.d)
    st = _state(ds, seed=6)
    for _ in range(30):
        step(st)
        assert st.n_nonempty(PATIENT) == 1


def test_seizure_out_and_back_restores_counts(small_dataset):
    st = _state(small_dataset)
    lv2, lv3 = st.levels[SEIZURE], st.levels[CHANNEL]
    before = lv3.n.copy()
    s = 2
    c = np.bincount(lv3.z[st.seizure_offsets[s]:st.seizure_offsets[s + 1]], minlength=lv3.L)
    lv3.n[lv2.z[s]] -= c
    lv3.n[lv2.z[s]] += c
    np.testing.assert_array_equal(lv3.n, before)


@pytest.mark.parametrize("move", [sample_channel_indicators, sample_seizure_indicators,
                                  sample_patient_indicators])
def test_each_move_keeps_counts(small_dataset, move):
    st = _state(small_dataset, seed=7)
    for _ in range(5):
        move(st)
        bad = [b for b in audit(st) if "table counts" not in b and "non-trailing" not in b]
        assert bad == []


def test_level_params_normalised(small_dataset):
    st = _state(small_dataset, seed=8)
    for _ in range(10):
        step(st)
        sample_level_params(st)
        for lv in st.levels:
            assert abs(lv.beta.sum() - 1.0) <= 1e-12


def test_empty_level_weights():
    m = sample_table_counts(np.zeros((1, 0), dtype=int), 1.0, [1.0], np.random.default_rng(0))
    np.testing.assert_array_equal(sample_parent_weights(m, 1.0, np.random.default_rng(0)), [1.0])


def test_concentrated_counts_dominate_beta():
    # 10^4 observations spread over 100 level-atoms, all but one on base atom 0
    rng = np.random.default_rng(9)
    n = np.zeros((100, 2), dtype=int)
    n[:, 0] = 100
    n[0, 0], n[0, 1] = 99, 1
    hits = 0
    for _ in range(1000):
        m = sample_table_counts(n, 1.0, [0.5, 0.3, 0.2], rng)
        hits += sample_parent_weights(m, 1.0, rng)[0] > 0.9
    assert hits / 1000 > 0.95


def test_invariants_after_many_steps(small_dataset):
    st = _state(small_dataset, seed=10)
    for _ in range(100):
        step(st)
        assert audit(st) == []
        for lv in st.levels:
            col = lv.n.sum(axis=0)
            assert np.count_nonzero(col == 0) == 1 and col[-1] == 0


@pytest.mark.parametrize("cfg", [dict(rao_blackwell=False), dict(random_scan=True),
                                 dict(hyper_sampling=False), dict(levels_enabled=2)])
def test_variants_stay_consistent(small_dataset, cfg):
    st = _state(small_dataset, seed=11, **cfg)
    for _ in range(40):
        step(st)
    assert audit(st) == []
    if cfg.get("levels_enabled") == 2:
        assert set(st.levels[PATIENT].z.tolist()) == {0}


def test_relabel_invariance(small_dataset):
    st = _state(small_dataset, seed=12)
    for _ in range(20):
        step(st)
    K = st.K - 1
    perm = np.random.default_rng(0).permutation(K)
    other = relabel(st, CHANNEL, perm)
    assert audit(other) == []
    full = np.append(perm, K)
    for i in range(0, st.n_obs, 5):
        np.testing.assert_allclose(channel_log_scores(other, i), channel_log_scores(st, i)[full],
                                   rtol=0, atol=1e-10)
    # seizure-level scores under a permutation of seizure types
    L = st.levels[SEIZURE].L - 1
    perm2 = np.random.default_rng(1).permutation(L)
    o2 = relabel(st, SEIZURE, perm2)
    lv3a, lv3b = st.levels[CHANNEL], o2.levels[CHANNEL]
    c = np.bincount(lv3a.z[:6], minlength=lv3a.L)
    a = group_marginal_loglik_rows(c, lv3a.alpha, lv3a.beta, lv3a.n)
    b = group_marginal_loglik_rows(c, lv3b.alpha, lv3b.beta, lv3b.n)
    np.testing.assert_allclose(b, a[np.append(perm2, L)], rtol=0, atol=1e-10)


def test_prune_compacts(small_dataset):
    from mlchdp.sampler import _recount_stats
    st = _state(small_dataset, seed=13)
    while st.K < 3:
        step(st)
    lv = st.levels[CHANNEL]
    K = st.K
    moved = lv.z == 0
    rows = st.parent_rows(CHANNEL)
    np.add.at(lv.n, (rows[moved], np.zeros(moved.sum(), dtype=int)), -1)
    np.add.at(lv.n, (rows[moved], np.ones(moved.sum(), dtype=int)), 1)
    lv.z[moved] = 1
    _recount_stats(st)
    sample_level_params(st)
    prune(st)
    assert st.K == K - 1
    assert audit(st) == []
    assert set(lv.z.tolist()) == set(range(K - 2))


def test_run_chain_record_indices(small_dataset):
    s = run_chain(small_dataset, None, ChainConfig(burn_in=0, thin=1, n_samples=3, seed=1))
    assert [x.iter for x in s] == [1, 2, 3]
    s = run_chain(small_dataset, None, ChainConfig(burn_in=5, thin=3, n_samples=2, seed=1))
    assert [x.iter for x in s] == [8, 11]


def test_run_chain_deterministic(small_dataset, tmp_path):
    cfg = ChainConfig(burn_in=3, thin=2, n_samples=4, seed=21)
    a, b = run_chain(small_dataset, None, cfg), run_chain(small_dataset, None, cfg)
    write_samples(tmp_path / "a.jsonl", a)
    write_samples(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    back = read_samples(tmp_path / "a.jsonl")
    assert back[0].z3 == a[0].z3 and np.array_equal(back[0].mu, a[0].mu)


def test_chain_config_validation():
    for bad in (dict(burn_in=-1), dict(thin=0), dict(n_samples=0), dict(levels_enabled=4)):
        with pytest.raises(ValueError):
            ChainConfig(**bad)


def test_random_fixture_larger(rng):
    ds = make_dataset([[8] * 4, [12] * 3, [5] * 6], d=3, seed=5)
    st = _state(ds, seed=14)
    for _ in range(25):
        step(st)
    assert audit(st) == []
