"""Deterministic synthetic return generators.

No public dataset ships with the package, so tests and the CLI build
instances from a seeded factor model: a symmetric Gaussian base plus an
asymmetric shock component whose loading controls the skewness level.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .moments import ReturnsMatrix

__all__ = ["synthetic_returns", "symmetric_returns"]


def synthetic_returns(n: int, T: int, seed: int, skew_level: float = 0.5) -> ReturnsMatrix:
    """Factor-model returns with tunable asymmetry.

    ``skew_level`` scales a centred chi-square shock shared across assets
    with random positive loadings; zero gives an elliptically symmetric
    sample (up to sampling noise).
    """
    if n < 1 or T < 2:
        raise ParameterError("need n >= 1 assets and T >= 2 periods")
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.002, 0.015, size=n)
    vols = rng.uniform(0.015, 0.05, size=n)
    k = max(1, n // 2)
    loadings = rng.normal(0.0, 1.0, size=(n, k)) / np.sqrt(k)
    corr_root = 0.6 * loadings
    idio = np.sqrt(np.maximum(1.0 - (corr_root ** 2).sum(axis=1), 0.1))
    z_common = rng.standard_normal((T, k))
    z_own = rng.standard_normal((T, n))
    base = z_common @ corr_root.T + z_own * idio
    shock = rng.standard_normal(T)
    shock = (shock ** 2 - 1.0) / np.sqrt(2.0)  # zero mean, unit variance, skewed
    gammas = rng.uniform(0.2, 1.0, size=n)
    returns = mu + vols * (base + skew_level * shock[:, None] * gammas[None, :])
    assets = tuple("A%d" % (i + 1) for i in range(n))
    return ReturnsMatrix(assets=assets, observations=returns)


def symmetric_returns(n: int, T: int, seed: int) -> ReturnsMatrix:
    """Mirror-symmetric sample: every odd central moment is exactly zero."""
    half = synthetic_returns(n, max(T // 2, 2), seed, skew_level=0.0)
    obs = half.observations
    mu = obs.mean(axis=0)
    mirrored = np.vstack([obs, 2.0 * mu - obs])
    return ReturnsMatrix(assets=half.assets, observations=mirrored)
