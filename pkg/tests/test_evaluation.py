import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from mlchdp.baselines import run_dp_chain
from mlchdp.data import TABLE1
from mlchdp.evaluation import (GridDensity, cluster_count_posterior, dp_heldout_assign,
                               histogram_mode, kl_divergence, kl_grid, log_perplexity,
                               map_assign, metric_rows, mixture_pdf, mlchdp_heldout_assign,
                               perplexity, posterior_density, rand_c, read_metrics,
                               seizure_loglik, standard_error, write_metrics)
from mlchdp.samples import PosteriorSample
from mlchdp.sampler import ChainConfig


def rand_brute(a, b):
    pairs = list(itertools.combinations(range(len(a)), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


def set_partitions(n):
    """All labelings in restricted-growth form, one per set partition."""
    def grow(prefix, top):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for k in range(top + 2):
            yield from grow(prefix + [k], max(top, k))
    yield from grow([0], 0)


def _dp_sample(mu, sigma2, z, alpha=1.0):
    return PosteriorSample("dp", 0, None, None, list(z), {}, np.asarray(mu, float).reshape(-1, 1),
                           np.asarray(sigma2, float).reshape(-1, 1), {"alpha": alpha})


# -- densities and KL ---------------------------------------------------------------

def test_single_atom_density():
    g = np.linspace(-5, 5, 101)
    s = PosteriorSample("ndp", 0, None, [0], [[0]], {"bottom": np.array([[1.0]])},
                        np.zeros((1, 1)), np.ones((1, 1)), {}, {"K_bottom": 1})
    d = posterior_density([s], g, 0)
    np.testing.assert_allclose(d.pdf, sps.norm.pdf(g), rtol=0, atol=1e-12)
    d2 = posterior_density([s, s], g, 0)
    np.testing.assert_allclose(d2.pdf, d.pdf, rtol=0, atol=1e-15)


def test_density_needs_one_dimension():
    s = _dp_sample([0.0, 0.0], [1.0, 1.0], [0])
    s.mu, s.sigma2 = np.zeros((2, 2)), np.ones((2, 2))
    with pytest.raises(ValueError):
        posterior_density([s], np.linspace(-1, 1, 5))


def test_dp_fit_recovers_t2_density():
    x = TABLE1["T2"].sample(10 ** 4, np.random.default_rng(0))[:, None]
    samples = run_dp_chain(x, config=ChainConfig(burn_in=100, thin=5, n_samples=20, seed=1))
    g = kl_grid()
    est = posterior_density(samples, g)
    assert np.max(np.abs(est.pdf - TABLE1["T2"].pdf(g))) < 0.02
    assert abs(est.integral() - 1.0) < 1e-3


def test_kl_identical_is_zero():
    g = kl_grid()
    p = GridDensity(g, TABLE1["T3"].pdf(g))
    assert kl_divergence(p, p) <= 1e-12


def test_kl_shifted_gaussians():
    g = np.linspace(-10, 10, 10 ** 4)
    p, q = GridDensity(g, sps.norm.pdf(g)), GridDensity(g, sps.norm.pdf(g, 1.0))
    assert kl_divergence(p, q) == pytest.approx(0.5, abs=1e-3)


def test_kl_nonnegative_random_pairs():
    rng = np.random.default_rng(2)
    g = np.linspace(-20, 20, 2001)
    for _ in range(100):
        a, b = [GridDensity(g, mixture_pdf(g, rng.dirichlet(np.ones(3)), rng.normal(0, 3, 3),
                                           rng.uniform(0.2, 3, 3))) for _ in range(2)]
        assert kl_divergence(a, b) >= 0


def test_kl_grid_mismatch():
    with pytest.raises(ValueError, match="grid mismatch"):
        kl_divergence(GridDensity([0, 1], [1, 1]), GridDensity([0, 2], [1, 1]))


def test_kl_floor_keeps_finite():
    g = np.linspace(-10, 10, 1001)
    p = GridDensity(g, sps.norm.pdf(g))
    q = GridDensity(g, np.where(g < 0, 2 * sps.norm.pdf(g), 0.0))
    assert np.isfinite(kl_divergence(p, q))


def test_grid_density_validation():
    with pytest.raises(ValueError):
        GridDensity([1, 0], [1, 1])
    with pytest.raises(ValueError):
        GridDensity([0, 1], [1, -1])


# -- perplexity -----------------------------------------------------------------------

def test_perplexity_formula():
    # one channel whose log likelihood is -2: N(x | 0, s2) with that value
    s2 = 1.0
    x = np.sqrt(2 * (2 - 0.5 * np.log(2 * np.pi * s2)))
    pp = perplexity([np.array([[x]])], [np.array([0])], np.zeros((1, 1)), np.ones((1, 1)))
    assert pp == pytest.approx(np.exp(2.0))


def test_perplexity_duplicate_and_order_invariant():
    rng = np.random.default_rng(3)
    mu, s2 = rng.normal(0, 2, (3, 2)), rng.uniform(0.5, 2, (3, 2))
    xs = [rng.normal(0, 2, (n, 2)) for n in (4, 7, 3)]
    zs = [rng.integers(0, 3, len(x)) for x in xs]
    base = perplexity(xs, zs, mu, s2)
    assert perplexity(xs + xs, zs + zs, mu, s2) == pytest.approx(base)
    assert perplexity(xs[::-1], zs[::-1], mu, s2) == pytest.approx(base)


def test_true_atoms_beat_misscaled_atoms():
    rng = np.random.default_rng(4)
    mu, s2 = np.array([[0.0], [5.0]]), np.array([[1.0], [1.0]])
    xs = [rng.normal(mu[z], 1.0) for z in (rng.integers(0, 2, 20) for _ in range(5))]
    good = [map_assign(x, np.log([0.5, 0.5]), mu, s2) for x in xs]
    bad = [map_assign(x, np.log([0.5, 0.5]), mu, 100 * s2) for x in xs]
    assert perplexity(xs, good, mu, s2) < perplexity(xs, bad, mu, 100 * s2)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.integers(0, 5),
       st.floats(0.01, 2.0))
def test_perplexity_decreases_in_channel_loglik(xs, i, delta):
    # moving one channel closer to its atom raises its likelihood and lowers PP
    x = np.array(xs)[:, None] + 0.0
    i = i % len(xs)
    z = np.zeros(len(xs), dtype=int)
    mu, s2 = np.zeros((1, 1)), np.ones((1, 1))
    y = x.copy()
    if abs(y[i, 0]) < 1e-9:
        return
    y[i, 0] = y[i, 0] * max(0.0, 1 - delta / abs(y[i, 0]))
    assert log_perplexity([y], [z], mu, s2) < log_perplexity([x], [z], mu, s2)


def test_expected_assignment_loglik():
    x = np.array([[0.0], [3.0]])
    mu, s2 = np.array([[0.0], [3.0]]), np.ones((2, 1))
    r = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert seizure_loglik(x, r, mu, s2) == pytest.approx(seizure_loglik(x, [0, 1], mu, s2))
    with pytest.raises(ValueError):
        seizure_loglik(x, [0], mu, s2)


def test_dp_heldout_uses_only_live_atoms():
    s = _dp_sample([0.0, 10.0, 50.0], [1.0, 1.0, 1.0], [0, 0, 1, 1])
    (z,) = dp_heldout_assign(s, [np.array([[49.0], [1.0]])])
    assert z.tolist() == [1, 0]
    (p,) = dp_heldout_assign(s, [np.array([[5.0]])], mode="expected")
    assert p.shape == (1, 3) and p[0, 2] == 0 and abs(p.sum() - 1) < 1e-12


def test_mlchdp_heldout_picks_type():
    # two seizure types: type 0 on atom 0, type 1 on atom 1
    s = PosteriorSample("mlchdp", 0, [0], [[0, 1]], [[[0, 0, 0], [1, 1, 1]]],
                        {"1": np.array([0.9, 0.1]), "2": np.array([0.5, 0.4, 0.1]),
                         "3": np.array([0.45, 0.45, 0.1])},
                        np.array([[0.0], [6.0], [20.0]]), np.ones((3, 1)),
                        {"alpha": [1.0, 1.0, 1.0], "gamma": [1.0, 1.0, 1.0]})
    (z,) = mlchdp_heldout_assign(s, [np.array([[5.5], [6.2], [2.9]])], 0)
    assert z.tolist() == [1, 1, 1]
    (p,) = mlchdp_heldout_assign(s, [np.array([[5.5], [6.2]])], 0, mode="expected")
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert np.all(p[:, 2] == 0)


# -- Rand C -----------------------------------------------------------------------------

def test_rand_c_examples():
    assert rand_c([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(1 / 3)
    assert rand_c([3, 3, 7, 1], [0, 0, 5, 9]) == 1.0
    assert rand_c([4], [8]) == 1.0
    with pytest.raises(ValueError):
        rand_c([1, 2], [1, 2, 3])


@pytest.mark.parametrize("n", range(2, 7))
def test_rand_c_all_partitions(n):
    parts = list(set_partitions(n))
    for a in parts:
        for b in parts:
            assert rand_c(a, b) == rand_brute(a, b)


labels = st.lists(st.integers(0, 4), min_size=1, max_size=15)


@given(labels, st.data())
def test_rand_c_properties(a, data):
    b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
    assert rand_c(a, b) == rand_c(b, a)
    perm = data.draw(st.permutations(range(5)))
    assert rand_c([perm[k] for k in a], b) == rand_c(a, b)
    assert rand_c(a, a) == 1.0
    assert 0.0 <= rand_c(a, b) <= 1.0


# -- cluster counts and tables ------------------------------------------------------------

def _ndp_with_tops(tops):
    return PosteriorSample("ndp", 0, None, list(tops), [[0]] * len(tops), {},
                           np.zeros((1, 1)), np.ones((1, 1)), {}, {"K_bottom": 1})


def test_cluster_count_histogram():
    h = cluster_count_posterior([_ndp_with_tops([0, 1, 2])] * 4)
    assert h == {3: 1.0}
    h = cluster_count_posterior([_ndp_with_tops(t) for t in ([0, 1], [0, 1, 2], [5, 5, 1])])
    assert abs(sum(h.values()) - 1) < 1e-12 and histogram_mode(h) == 2


def test_metric_rows_standard_error(tmp_path):
    vals = [0.1, 0.4, 0.25, 0.3]
    rows = metric_rows("kl", "mlchdp", "T1", vals)
    assert [r["chain"] for r in rows] == ["0", "1", "2", "3", "mean", "se"]
    assert rows[-1]["value"] == pytest.approx(np.std(vals, ddof=1) / 2)
    assert np.isnan(standard_error([1.0]))
    write_metrics(tmp_path / "m.csv", rows)
    back = read_metrics(tmp_path / "m.csv")
    assert [r["value"] for r in back] == [r["value"] for r in rows]
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "metric,model,dataset,chain,value"
