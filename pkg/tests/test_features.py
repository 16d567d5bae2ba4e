import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import get_window

from mlchdp.features import (POWER_FLOOR, BandSpec, SignalRecord, apply_pca, band_powers,
                             channel_band_features, fit_pca, n_windows, read_signal,
                             reconstruct, record_features, write_signal)

FS = 512.0


def test_two_minute_clip_shape():
    x = np.random.default_rng(0).standard_normal(int(120 * FS))
    spec = BandSpec()
    assert n_windows(x.size, spec.window_samples(FS), spec.hop_samples(FS)) == 479
    assert channel_band_features(x, FS, spec).shape == (1916,)


def test_sinusoid_lands_in_alpha_band():
    t = np.arange(int(120 * FS)) / FS
    f = channel_band_features(np.sin(2 * np.pi * 10.0 * t), FS).reshape(-1, 4)
    others = np.delete(f, 1, axis=1)
    assert np.all(f[:, 1][:, None] - others > 2)


def test_zero_signal_hits_floor():
    f = channel_band_features(np.zeros(2048), FS)
    np.testing.assert_array_equal(f, np.log10(POWER_FLOOR))


def test_window_major_ordering():
    # a tone switching from 6 Hz to 20 Hz half way: band 0 first, band 2 later
    t = np.arange(int(4 * FS)) / FS
    x = np.where(t < 2, np.sin(2 * np.pi * 6 * t), np.sin(2 * np.pi * 20 * t))
    f = channel_band_features(x, FS).reshape(-1, 4)
    assert np.argmax(f[0]) == 0 and np.argmax(f[-1]) == 2


@given(st.integers(0, 5000), st.integers(1, 600), st.integers(1, 600))
def test_window_count_formula(n, w, hop):
    count = n_windows(n, w, hop)
    if n < w:
        assert count == 0
    else:
        assert count == (n - w) // hop + 1
        assert (count - 1) * hop + w <= n < count * hop + w


@given(st.integers(0, 2 ** 31))
def test_band_power_parseval(seed):
    x = np.random.default_rng(seed).standard_normal((3, 256))
    p = band_powers(x, FS, BandSpec().resolve(FS))
    w = get_window("hann", 256)
    total = np.sum((x * w) ** 2, axis=1) / np.sum(w ** 2)
    assert np.all(p >= 0)
    assert np.all(p.sum(axis=1) <= total * (1 + 1e-6))


def test_full_band_recovers_total_power():
    x = np.random.default_rng(1).standard_normal(256)
    p = band_powers(x[None], FS, ((1e-9, FS / 2),))
    w = get_window("hann", 256)
    total = np.sum((x * w) ** 2) / np.sum(w ** 2)
    # only the DC bin is excluded
    dc = np.sum(x * w) ** 2 / np.sum(w ** 2) / 256
    assert p[0, 0] == pytest.approx(total - dc, rel=1e-9)


def test_short_signal_rejected():
    with pytest.raises(ValueError, match="shorter than one window"):
        channel_band_features(np.ones(100), FS)


def test_band_above_nyquist():
    with pytest.raises(ValueError, match="Nyquist"):
        channel_band_features(np.ones(1000), 400.0, BandSpec(((4, 8), (250, 300))))
    with pytest.raises(ValueError, match="exceeds Nyquist"):
        channel_band_features(np.ones(1000), 400.0, BandSpec(((30, 250),)))


def test_low_rate_truncates_with_warning():
    with pytest.warns(UserWarning, match="truncated"):
        f = channel_band_features(np.random.default_rng(2).standard_normal(1000), 100.0)
    assert f.shape == (4 * n_windows(1000, 50, 25),)


def test_bandspec_validation():
    with pytest.raises(ValueError):
        BandSpec(overlap=1.0)
    with pytest.raises(ValueError):
        BandSpec(((8, 4),))


# -- PCA ---------------------------------------------------------------------------

def test_pca_rank_one():
    t = np.random.default_rng(3).normal(size=50)
    X = np.outer(t, [1.0, -2.0, 0.5]) + [3.0, 1.0, 0.0]
    m = fit_pca(X, 1)
    assert abs(m.explained[0] - 1.0) <= 1e-10


def test_pca_isotropic():
    X = np.random.default_rng(4).standard_normal((10 ** 4, 2))
    np.testing.assert_allclose(fit_pca(X, 2).explained, [0.5, 0.5], atol=0.05)


def test_pca_eckart_young():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 6)) @ rng.normal(size=(6, 6))
    m = fit_pca(X, 3)
    err = np.sum((X - reconstruct(m, apply_pca(m, X))) ** 2) / (X.shape[0] - 1)
    assert err == pytest.approx(np.sum(m.eigenvalues[3:]), rel=1e-8)


@given(st.integers(0, 2 ** 31), st.integers(1, 5))
def test_pca_orthonormal_and_ordered(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 5)) * rng.uniform(0.1, 5, 5)
    m = fit_pca(X, k)
    assert np.max(np.abs(m.components @ m.components.T - np.eye(k))) <= 1e-8
    assert np.all(np.diff(m.explained) <= 1e-15)
    assert np.all((m.explained >= 0) & (m.explained <= 1))
    for row in m.components:
        assert row[np.flatnonzero(np.abs(row) > 1e-12)[0]] > 0


def test_pca_mean_maps_to_zero_and_round_trip():
    X = np.random.default_rng(6).normal(size=(40, 4))
    m = fit_pca(X, 4)
    np.testing.assert_allclose(apply_pca(m, m.mean), 0, atol=1e-12)
    np.testing.assert_allclose(reconstruct(m, apply_pca(m, X[7])), X[7], atol=1e-8)


def test_pca_affine_linearity():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 4))
    m = fit_pca(X, 2)
    x, y, a, b = X[0], X[1], 1.7, -0.4
    lhs = apply_pca(m, a * x + b * y)
    rhs = a * apply_pca(m, x) + b * apply_pca(m, y) + (a + b - 1) * (m.components @ m.mean)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_pca_deterministic():
    X = np.random.default_rng(8).normal(size=(20, 5))
    a, b = fit_pca(X, 3), fit_pca(X.copy(), 3)
    np.testing.assert_array_equal(a.components, b.components)


def test_pca_errors():
    with pytest.raises(ValueError, match="degenerate"):
        fit_pca(np.ones((5, 3)), 1)
    with pytest.raises(ValueError):
        fit_pca(np.ones((1, 3)), 1)
    with pytest.raises(ValueError):
        fit_pca(np.random.default_rng(0).normal(size=(3, 5)), 3)
    m = fit_pca(np.random.default_rng(0).normal(size=(10, 3)), 2)
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply_pca(m, np.zeros(4))


# -- signal files ---------------------------------------------------------------------

def test_signal_round_trip(tmp_path):
    rec = SignalRecord(256.0, ["a", "b"], np.random.default_rng(9).normal(size=(2, 700)), 1.5)
    write_signal(rec, tmp_path / "clip")
    back = read_signal(tmp_path / "clip.json")
    assert back.fs == 256.0 and back.channels == ["a", "b"] and back.t0 == 1.5
    np.testing.assert_array_equal(back.data, rec.data)
    assert record_features(back).shape[0] == 2


def test_malformed_signal(tmp_path):
    (tmp_path / "x.json").write_text('{"channels": ["a"]}')
    (tmp_path / "x.bin").write_bytes(b"\0" * 8)
    with pytest.raises(ValueError, match="malformed"):
        read_signal(tmp_path / "x.json")
    (tmp_path / "y.json").write_text('{"fs": 100, "channels": ["a", "b", "c"]}')
    (tmp_path / "y.bin").write_bytes(b"\0" * 16)
    with pytest.raises(ValueError, match="divisible"):
        read_signal(tmp_path / "y.json")
