"""Pixel-wise soft-threshold shrinkage.

Thresholds are ``tau = S * mean_t |x|`` for each (batch*channel, row, col)
series, values inside ``[-tau, tau]`` are zeroed and the rest pulled toward
zero by ``tau``.  The functions here are shared by the network's shrinkage
block and by the non-learned :func:`classic_denoise`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import PhotonCube
from .windowing import WindowConfig, temporal_window


@dataclass(frozen=True, eq=False)
class ThresholdMap:
    S: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        if np.any(self.S < 0) or np.any(self.S > 1):
            raise ValueError("scaling map must lie in [0, 1]")
        if not np.all(np.isfinite(self.tau)) or np.any(self.tau < 0):
            raise ValueError("thresholds must be finite and non-negative")


def pixel_thresholds(Xr: np.ndarray, S: np.ndarray) -> ThresholdMap:
    """Thresholds for a ``(BC, T, M, N)`` residual and ``(BC, M, N)`` scaling."""
    Xr = np.asarray(Xr, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    return ThresholdMap(S, S * np.abs(Xr).mean(axis=1))


def soft_threshold(x, tau):
    """Elementwise ``sign(x) * max(|x| - tau, 0)``; ``tau`` broadcasts against ``x``."""
    x = np.asarray(x, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0):
        raise ValueError("threshold must be non-negative")
    return np.where(x > tau, x - tau, np.where(x < -tau, x + tau, 0.0))


def soft_threshold_backward(x, tau, upstream):
    """Gradients of :func:`soft_threshold` w.r.t. ``x`` and ``tau``.

    The kinks ``|x| == tau`` take the dead-zone branch, so both derivatives
    are zero there.  ``d/dtau`` has the shape of ``x``; reduce it over any
    broadcast axes yourself.
    """
    x = np.asarray(x, dtype=np.float64)
    live = np.abs(x) > tau
    up = np.asarray(upstream, dtype=np.float64)
    return np.where(live, up, 0.0), np.where(live, -np.sign(x) * up, 0.0)


def residual_denoise(X: np.ndarray, Xd: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    Xd = np.asarray(Xd)
    if X.shape != Xd.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Xd.shape}")
    return X + Xd


def classic_denoise(cube, w: WindowConfig, s0: float = 0.5) -> np.ndarray:
    """Window the cube, then shrink each pixel with ``tau = s0 * mean_t``.

    Windowed counts are non-negative, so the mean of magnitudes is the plain
    mean and the output stays non-negative.  Returns a pixel-major float cube.
    """
    if not 0 <= s0 <= 1:
        raise ValueError(f"s0 must lie in [0, 1], got {s0}")
    counts = cube.counts if isinstance(cube, PhotonCube) else np.asarray(cube)
    windowed = temporal_window(counts, w)
    tau = s0 * np.abs(windowed).mean(axis=-1)
    return kernels.soft_threshold(windowed, tau)
