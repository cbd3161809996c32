"""Poisson photon-count simulation of a single-photon LiDAR scan.

The per-bin expected count is the bin integral of the rate
``eta * alpha * s(t - 2Z/c) + n_b`` times the number of illuminations; an
arbitrary scalar ``gain`` absorbs the unknown energy scale of the pulse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .core import DetectorConfig, PhotonCube, PulseModel, Scene, PULSE_TRUNCATION_SIGMAS


@dataclass(frozen=True)
class SbrTarget:
    """Mean detected signal photons and total background counts per pixel."""

    signal_photons: float
    background_photons: float

    def __post_init__(self):
        if not self.signal_photons > 0:
            raise ValueError("signal_photons must be > 0")
        if self.background_photons < 0:
            raise ValueError("background_photons must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "SbrTarget":
        """Parse the ``signal:background`` notation, e.g. ``"2:50"``."""
        sig, _, bg = text.partition(":")
        if not _:
            raise ValueError(f"expected 'signal:background', got {text!r}")
        return cls(float(sig), float(bg))

    def __str__(self):
        return f"{self.signal_photons:g}:{self.background_photons:g}"


@dataclass(frozen=True, eq=False)
class RateCube:
    """Expected counts per bin, shape ``(M, N, T)``."""

    expected: np.ndarray
    meta: DetectorConfig

    def __post_init__(self):
        e = np.asarray(self.expected, dtype=np.float64)
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise ValueError("expected counts must be finite and non-negative")
        e.setflags(write=False)
        object.__setattr__(self, "expected", e)


def _pulse_mass(centers: np.ndarray, sigma_bins: float, T: int) -> np.ndarray:
    """Unit-area truncated Gaussian integrated over bins ``[k, k+1)``.

    ``centers`` are continuous bin positions of any shape; the result gains a
    trailing axis of length ``T``.  Mass beyond the cube is dropped.
    """
    c = np.asarray(centers, dtype=np.float64)[..., None]
    k = np.arange(T, dtype=np.float64)
    if sigma_bins == 0.0:
        # Dirac limit; a center on a boundary splits evenly between neighbours.
        inside = ((k <= c) & (c < k + 1)).astype(np.float64)
        on_edge = (c == np.floor(c)) & (c > 0)
        return np.where(on_edge, 0.5 * ((k == c) | (k == c - 1)), inside)
    half = PULSE_TRUNCATION_SIGMAS * sigma_bins
    a = np.clip(k, c - half, c + half)
    b = np.clip(k + 1.0, c - half, c + half)
    norm = ndtr(PULSE_TRUNCATION_SIGMAS) - ndtr(-PULSE_TRUNCATION_SIGMAS)
    mass = (ndtr((b - c) / sigma_bins) - ndtr((a - c) / sigma_bins)) / norm
    return np.maximum(mass, 0.0)


def depth_to_position(depth, cfg: DetectorConfig):
    """Continuous bin coordinate ``2 * depth / (c * delta)`` of a return."""
    return 2.0 * np.asarray(depth, dtype=np.float64) / (cfg.c * cfg.delta)


def discretize_pulse(pulse: PulseModel, cfg: DetectorConfig, depth: float) -> np.ndarray:
    """Fraction of the pulse energy landing in each of the ``T`` bins."""
    if not 0 <= depth < cfg.max_range:
        raise ValueError(f"depth {depth} m outside unambiguous range [0, {cfg.max_range:.6g})")
    return _pulse_mass(depth_to_position(depth, cfg), pulse.sigma / cfg.delta, cfg.T)


def signal_mass(scene: Scene, cfg: DetectorConfig, pulse: PulseModel) -> np.ndarray:
    """Per-pixel pulse mass per bin, shape ``(M, N, T)``."""
    scene.check_range(cfg)
    return _pulse_mass(depth_to_position(scene.Z, cfg), pulse.sigma / cfg.delta, cfg.T)


def background_per_bin(cfg: DetectorConfig) -> float:
    return cfg.n_illum * cfg.n_b * cfg.delta


def build_rate_cube(scene: Scene, cfg: DetectorConfig, pulse: PulseModel, gain: float) -> RateCube:
    if gain < 0:
        raise ValueError(f"gain must be >= 0, got {gain}")
    mass = signal_mass(scene, cfg, pulse)
    expected = (gain * cfg.eta * cfg.n_illum) * scene.alpha[..., None] * mass
    expected += background_per_bin(cfg)
    return RateCube(expected, cfg)


def calibrate(
    scene: Scene, cfg: DetectorConfig, pulse: PulseModel, target: SbrTarget
) -> tuple[float, float]:
    """Return ``(gain, n_b)`` hitting the target photon budgets exactly.

    The scene-mean expected signal total equals ``target.signal_photons`` and
    every pixel receives ``target.background_photons`` background counts.
    """
    if not np.any(scene.alpha > 0):
        raise ValueError("cannot calibrate a scene with zero reflectivity everywhere")
    per_pixel = scene.alpha * signal_mass(scene, cfg, pulse).sum(axis=-1)
    gain = target.signal_photons / (cfg.eta * cfg.n_illum * per_pixel.mean())
    n_b = target.background_photons / (cfg.n_illum * cfg.T * cfg.delta)
    return float(gain), float(n_b)


def calibrated_rates(
    scene: Scene, cfg: DetectorConfig, pulse: PulseModel, target: SbrTarget
) -> tuple[RateCube, DetectorConfig, float]:
    """Calibrate and build in one go; returns the rates, the detector with its
    background rate filled in, and the gain."""
    gain, n_b = calibrate(scene, cfg, pulse, target)
    cfg = cfg.replace(n_b=n_b)
    return build_rate_cube(scene, cfg, pulse, gain), cfg, gain


def pixel_rng(seed: int, i: int, j: int) -> np.random.Generator:
    """Counter-based stream for pixel ``(i, j)``; independent of cube width."""
    key = np.array([seed, (i << 32) | j], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_cube(rates: RateCube, seed: int) -> PhotonCube:
    """Draw an independent Poisson count for every bin of every pixel."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    lam = rates.expected
    M, N, T = lam.shape
    counts = np.zeros((M, N, T), dtype=np.int64)
    for i in range(M):
        for j in range(N):
            counts[i, j] = pixel_rng(seed, i, j).poisson(lam[i, j])
    return PhotonCube(counts, rates.meta)


def simulate(
    scene: Scene, cfg: DetectorConfig, pulse: PulseModel, target: SbrTarget, seed: int
) -> PhotonCube:
    rates, cfg, _ = calibrated_rates(scene, cfg, pulse, target)
    return sample_cube(rates, seed)
