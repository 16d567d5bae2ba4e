"""
From raw channels to feature vectors
====================================

Each channel of a clip is cut into half-second Hann windows with 50%
overlap.  Log10 power in four frequency bands per window gives the raw
feature vector; PCA then reduces all channels to a common low dimension.
"""

import numpy as np

from mlchdp.features import BandSpec, apply_pca, channel_band_features, fit_pca, n_windows

fs = 512.0
t = np.arange(int(120 * fs)) / fs
rng = np.random.default_rng(0)

# %% eight channels: noise plus an alpha (10 Hz) or beta (20 Hz) rhythm
channels = np.stack([np.sin(2 * np.pi * (10 if c < 4 else 20) * t) + 0.3 * rng.standard_normal(t.size)
                     for c in range(8)])

spec = BandSpec()
w, hop = spec.window_samples(fs), spec.hop_samples(fs)
print("windows per channel:", n_windows(t.size, w, hop))

# %% features are ordered window-major: [w0 b0..b3, w1 b0..b3, ...]
F = np.stack([channel_band_features(ch, fs, spec) for ch in channels])
print("feature matrix:", F.shape)
per_band = F.reshape(8, -1, len(spec.bands)).mean(axis=1)
print("mean log10 power per band (rows: channels)\n", per_band.round(2))

# %% PCA: the alpha and beta channels separate along the first component
pca = fit_pca(F, 2)
Y = apply_pca(pca, F)
print("explained variance:", pca.explained.round(3))
print("first component:", Y[:, 0].round(1))
