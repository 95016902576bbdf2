"""Weak and strong perturbations of feature vectors.

Weak: small additive Gaussian jitter.  Strong: larger jitter, a random
per-sample rescaling and random coordinate dropout.  Noise scales are
given as fractions of the per-dimension training standard deviation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class AugmentConfig:
    weak_sigma: float = 0.05
    strong_sigma: float = 0.25
    strong_scale_range: tuple = (0.7, 1.3)
    strong_drop_prob: float = 0.1

    def validate(self):
        lo, hi = self.strong_scale_range
        if not 0.0 <= self.weak_sigma < self.strong_sigma:
            raise ConfigError("need 0 <= weak_sigma < strong_sigma", key="augment.weak_sigma")
        if not 0.0 < lo <= hi:
            raise ConfigError("need 0 < lo <= hi", key="augment.strong_scale_range")
        if not 0.0 <= self.strong_drop_prob < 1.0:
            raise ConfigError("drop probability must lie in [0, 1)", key="augment.strong_drop_prob")


def weak(x, cfg: AugmentConfig, rng, feature_std=1.0):
    x = np.asarray(x, dtype=np.float64)
    eps = rng.standard_normal(x.shape)
    return x + eps * (cfg.weak_sigma * np.asarray(feature_std))


def strong(x, cfg: AugmentConfig, rng, feature_std=1.0):
    x = np.asarray(x, dtype=np.float64)
    lo, hi = cfg.strong_scale_range
    eps = rng.standard_normal(x.shape) * (cfg.strong_sigma * np.asarray(feature_std))
    # one scale per sample (row); a bare vector is a single sample
    scale_shape = x.shape[:-1] + (1,) if x.ndim > 1 else (1,)
    s = rng.uniform(lo, hi, scale_shape)
    keep = rng.random(x.shape) >= cfg.strong_drop_prob
    return keep * (s * (x + eps))
