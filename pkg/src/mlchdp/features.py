"""Sliding-window log band powers and PCA reduction of multichannel clips."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import periodogram

POWER_FLOOR = 1e-12
DEFAULT_BANDS = ((4.0, 8.0), (8.0, 13.0), (13.0, 30.0), (30.0, 100.0))
TAPER = "hann"


@dataclass(frozen=True)
class BandSpec:
    bands: tuple = DEFAULT_BANDS
    window: float = 0.5     # seconds
    overlap: float = 0.5    # fraction of a window

    def __post_init__(self):
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must be in [0, 1)")
        if self.window <= 0:
            raise ValueError("window must be positive")
        for lo, hi in self.bands:
            if not 0.0 < lo < hi:
                raise ValueError(f"invalid band ({lo}, {hi})")

    def window_samples(self, fs: float) -> int:
        return int(round(self.window * fs))

    def hop_samples(self, fs: float) -> int:
        return max(1, int(round(self.window * (1.0 - self.overlap) * fs)))

    def resolve(self, fs: float) -> tuple:
        """Bands clipped at Nyquist; a band starting above Nyquist is an error."""
        nyq = fs / 2.0
        out = []
        for lo, hi in self.bands:
            if lo >= nyq:
                raise ValueError(f"band ({lo}, {hi}) Hz lies above Nyquist ({nyq} Hz)")
            if hi > nyq:
                if fs < 200:
                    warnings.warn(f"band ({lo}, {hi}) Hz truncated at Nyquist {nyq} Hz",
                                  stacklevel=3)
                    hi = nyq
                else:
                    raise ValueError(f"band ({lo}, {hi}) Hz exceeds Nyquist ({nyq} Hz)")
            out.append((lo, hi))
        return tuple(out)


def n_windows(n_samples: int, window_samples: int, hop_samples: int) -> int:
    if n_samples < window_samples:
        return 0
    return (n_samples - window_samples) // hop_samples + 1


def band_powers(segments, fs: float, bands) -> np.ndarray:
    """Power in each band for every row of ``segments`` (windows x samples).

    The Hann-tapered periodogram density is summed over bins with
    lo <= f < hi (hi inclusive at Nyquist), times the bin width.
    """
    f, pxx = periodogram(segments, fs=fs, window=TAPER, detrend=False, scaling="density",
                         axis=-1)
    df = f[1] - f[0]
    nyq = fs / 2.0
    out = np.empty(segments.shape[:-1] + (len(bands),))
    for b, (lo, hi) in enumerate(bands):
        sel = (f >= lo) & ((f < hi) | ((hi >= nyq) & (f <= hi)))
        out[..., b] = pxx[..., sel].sum(axis=-1) * df
    return out


def channel_band_features(signal, fs: float, spec: BandSpec = BandSpec(),
                          floor: float = POWER_FLOOR) -> np.ndarray:
    """log10 band powers per window, ordered window-major: [w0 b0..bB, w1 b0.., ...]."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single channel")
    bands = spec.resolve(fs)
    w, hop = spec.window_samples(fs), spec.hop_samples(fs)
    nw = n_windows(x.shape[0], w, hop)
    if nw == 0:
        raise ValueError(f"signal of {x.shape[0]} samples is shorter than one window ({w})")
    idx = np.arange(nw)[:, None] * hop + np.arange(w)[None, :]
    power = band_powers(x[idx], fs, bands)
    return np.log10(np.maximum(power, floor)).reshape(-1)


# -- PCA ----------------------------------------------------------------------

@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray      # (target_dim, input_dim), orthonormal rows
    explained: np.ndarray       # fraction of total variance per component
    eigenvalues: np.ndarray = field(default=None)

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def target_dim(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained": self.explained.tolist(), "eigenvalues": self.eigenvalues.tolist()}


def _fix_signs(v):
    # first nonzero coefficient of each component positive
    for row in v:
        nz = np.flatnonzero(np.abs(row) > 1e-14 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return v


def fit_pca(X, target_dim: int) -> PCAModel:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs a matrix with at least two rows")
    if not 1 <= target_dim <= min(X.shape[0] - 1, X.shape[1]):
        raise ValueError(f"target_dim must be in 1..{min(X.shape[0] - 1, X.shape[1])}")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    eig = s ** 2 / (X.shape[0] - 1)
    total = eig.sum()
    if total <= 0 or not np.isfinite(total):
        raise ValueError("degenerate data: all rows identical")
    comps = _fix_signs(vt[:target_dim].copy())
    return PCAModel(mean, comps, eig[:target_dim] / total, eig)


def apply_pca(model: PCAModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"dimension mismatch: expected {model.input_dim}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def reconstruct(model: PCAModel, y) -> np.ndarray:
    return np.asarray(y) @ model.components + model.mean


# -- signal files ----------------------------------------------------------------

@dataclass
class SignalRecord:
    fs: float
    channels: list
    data: np.ndarray            # (channels, samples)
    t0: float = 0.0

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.data.shape[0] != len(self.channels):
            raise ValueError("one data row per channel name required")


def write_signal(record: SignalRecord, stem) -> tuple[Path, Path]:
    """Writes ``stem.json`` (sidecar) and ``stem.bin`` (little-endian float64)."""
    stem = Path(stem)
    meta = {"fs": float(record.fs), "channels": list(record.channels), "t0": float(record.t0)}
    jp, bp = stem.with_suffix(".json"), stem.with_suffix(".bin")
    jp.write_text(json.dumps(meta))
    bp.write_bytes(np.ascontiguousarray(record.data, dtype="<f8").tobytes())
    return jp, bp


def read_signal(sidecar) -> SignalRecord:
    sidecar = Path(sidecar)
    try:
        meta = json.loads(sidecar.read_text())
        fs, names = float(meta["fs"]), list(meta["channels"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed signal sidecar {sidecar}: {exc}") from exc
    raw = np.frombuffer(sidecar.with_suffix(".bin").read_bytes(), dtype="<f8")
    if not names or raw.size % len(names):
        raise ValueError(f"{sidecar.with_suffix('.bin')}: size not divisible by channel count")
    return SignalRecord(fs, names, raw.reshape(len(names), -1).astype(float),
                        float(meta.get("t0", 0.0)))


def record_features(record: SignalRecord, spec: BandSpec = BandSpec()) -> np.ndarray:
    """(channels, features) matrix for one clip."""
    return np.stack([channel_band_features(ch, record.fs, spec) for ch in record.data])
