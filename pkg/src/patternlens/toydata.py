"""Linear toy data: a controlled signal/distractor generative model.

Inputs are x = a_s * y + a_d * eps with y uniform on an interval and eps
Gaussian.  Only the first term carries information about y; the second is
a structured distractor that a trained filter must cancel.  Because the
generative directions are known exactly, recovery of the signal direction
by the estimators can be checked analytically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .rng import RngStream


@dataclass
class ToyConfig:
    a_s: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    a_d: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    y_low: float = -1.0
    y_high: float = 1.0
    noise_mu: float = 0.0
    noise_sigma: float = 1.0
    n_samples: int = 10000
    seed: int = 0

    def __post_init__(self):
        self.a_s = np.asarray(self.a_s, dtype=np.float64)
        self.a_d = np.asarray(self.a_d, dtype=np.float64)
        if self.a_s.ndim != 1 or self.a_s.shape != self.a_d.shape:
            raise ConfigError("signal and distractor directions must be equal-length vectors")
        ns, nd = np.linalg.norm(self.a_s), np.linalg.norm(self.a_d)
        if ns == 0 or nd == 0:
            raise ConfigError("signal and distractor directions must be nonzero")
        cos = float(self.a_s @ self.a_d) / (ns * nd)
        if abs(cos) > 1.0 - 1e-9:
            raise ConfigError("signal and distractor directions must not be parallel")
        if self.y_high <= self.y_low:
            raise ConfigError("empty output interval")
        if self.noise_sigma < 0:
            raise ConfigError("noise sigma must be nonnegative")
        if self.n_samples < 1:
            raise DataError("toy dataset needs at least one sample")


def generate_toy(config: ToyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sample (X, y): X is (n, dim), y is (n,).  Deterministic per seed."""
    rng = RngStream(config.seed)
    y = rng.uniform(config.y_low, config.y_high, size=config.n_samples)
    eps = rng.normal(config.noise_mu, config.noise_sigma, size=config.n_samples)
    X = np.outer(y, config.a_s) + np.outer(eps, config.a_d)
    return X, y
