"""Temporally correlated latent sequences from per-channel Gaussian processes.

Each channel c is an independent zero-mean draw over the base timeline with
covariance kappa(t1, t2) = exp(-|t1 - t2| / (2 sigma_c^2)); larger sigmas give
smoother channels.  Sampling goes through a Cholesky factor of the jittered
kernel, so fixed seeds reproduce identical bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, NumericalError

_MAX_JITTER = 1e-3


def default_sigmas(channels: int, low: float = 0.5, high: float = 8.0) -> tuple[float, ...]:
    """Geometric ladder of kernel widths so channels span correlation scales."""
    if channels < 1:
        raise ConfigError("channels must be positive")
    return tuple(float(s) for s in np.geomspace(low, high, channels))


@dataclass(frozen=True)
class GPLatentConfig:
    channels: int
    length: int
    sigmas: tuple[float, ...]
    jitter: float = 1e-6

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.length < 1:
            raise ConfigError("length must be >= 1")
        if len(self.sigmas) != self.channels:
            raise ConfigError("one sigma per channel is required")
        if any(s <= 0 for s in self.sigmas):
            raise ConfigError("sigmas must be positive")
        if self.jitter <= 0:
            raise ConfigError("jitter must be positive")


@dataclass(frozen=True)
class LatentSequence:
    """A (channels, length) matrix of GP-correlated noise."""

    z: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.z, dtype=np.float64)
        if arr.ndim != 2:
            raise ConfigError(f"latent matrix must be 2-d, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ConfigError("latent matrix contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "z", arr)


def build_gp_covariance(length: int, sigma: float) -> np.ndarray:
    """Kernel matrix K[i, j] = exp(-|i - j| / (2 sigma^2)) on the integer grid."""
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if length < 1:
        raise ConfigError("length must be >= 1")
    idx = np.arange(length, dtype=np.float64)
    return np.exp(-np.abs(idx[:, None] - idx[None, :]) / (2.0 * sigma * sigma))


def _factor_single(length: int, sigma: float, jitter: float) -> np.ndarray:
    kernel = build_gp_covariance(length, sigma)
    level = jitter
    while level <= _MAX_JITTER:
        try:
            return np.linalg.cholesky(kernel + level * np.eye(length))
        except np.linalg.LinAlgError:
            level *= 10.0
    raise NumericalError(
        f"GP kernel factorization failed for sigma={sigma} even with jitter {_MAX_JITTER}"
    )


@lru_cache(maxsize=64)
def _factors(cfg: GPLatentConfig) -> np.ndarray:
    out = np.stack([_factor_single(cfg.length, s, cfg.jitter) for s in cfg.sigmas])
    out.setflags(write=False)
    return out


def sample_latent_batch(cfg: GPLatentConfig, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` latent matrices, shape (count, channels, length)."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    factors = _factors(cfg)
    eps = rng.standard_normal((count, cfg.channels, cfg.length))
    return np.einsum("cij,ncj->nci", factors, eps)


def sample_latent(cfg: GPLatentConfig, rng: np.random.Generator) -> LatentSequence:
    """Draw one latent matrix; deterministic for a given generator state."""
    return LatentSequence(z=sample_latent_batch(cfg, 1, rng)[0])
