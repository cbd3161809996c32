"""Classical per-pixel depth estimators: naive argmax and the log-matched filter."""
from __future__ import annotations

import numpy as np

from . import kernels
from .core import DepthImage, DetectorConfig, PhotonCube, PulseModel, bin_depth_width
from .simulator import _pulse_mass

BACKGROUND_FLOOR = 1e-12


def _counts(cube) -> np.ndarray:
    return cube.counts if isinstance(cube, PhotonCube) else np.asarray(cube)


def decode_bins(bins, cfg: DetectorConfig) -> DepthImage:
    """Depth of a hard bin decision, using the same 1-based convention as the
    soft decoder: bin ``y`` maps to ``(y + 1) * delta * c / 2``."""
    return DepthImage((np.asarray(bins, dtype=np.float64) + 1.0) * bin_depth_width(cfg))


def argmax_bins(cube) -> np.ndarray:
    return kernels.first_argmax(_counts(cube))


def argmax_depth(cube, cfg: DetectorConfig | None = None) -> DepthImage:
    """Per pixel, the bin with the most counts (ties to the earliest bin)."""
    cfg = cfg or cube.meta
    return decode_bins(argmax_bins(cube), cfg)


def log_template(pulse: PulseModel, cfg: DetectorConfig, signal_photons: float):
    """Log-likelihood-ratio weights of a pulse centered in its bin.

    Returns ``(weights, lo)`` where tap ``m`` applies to bin ``d + lo + m``
    when testing shift ``d``.
    """
    sigma_bins = pulse.sigma / cfg.delta
    reach = int(np.ceil(pulse.half_support / cfg.delta)) + 1
    T = 2 * reach + 1
    s = _pulse_mass(reach + 0.5, sigma_bins, T)
    nz = np.flatnonzero(s > 0)
    s = s[nz[0]: nz[-1] + 1]
    b = max(cfg.n_illum * cfg.n_b * cfg.delta, BACKGROUND_FLOOR)
    weights = np.log(signal_photons * s + b) - np.log(b)
    return weights, int(nz[0]) - reach


def estimate_signal(cube, cfg: DetectorConfig) -> float:
    """Mean per-pixel count above the expected background, floored at 1e-3."""
    total = _counts(cube).sum(axis=-1).mean()
    return float(max(total - cfg.n_illum * cfg.n_b * cfg.delta * cfg.T, 1e-3))


def estimate_background(cube, pulse: PulseModel, cfg: DetectorConfig) -> float:
    """Background rate ``n_b`` (counts/s) from bins away from each pixel's peak.

    Bins within one pulse support of the windowed argmax are excluded; the
    rest are averaged over all pixels.
    """
    h = _counts(cube).reshape(-1, cfg.T).astype(np.float64)
    reach = int(np.ceil(pulse.half_support / cfg.delta)) + 1
    peak = kernels.first_argmax(kernels.window_sum(h, 2 * reach + 1))
    k = np.arange(cfg.T)
    keep = np.abs(k[None, :] - peak[:, None]) > reach
    if not keep.any():
        return 0.0
    per_bin = h[keep].mean()
    return float(per_bin / (cfg.n_illum * cfg.delta))


def log_matched_filter_bins(cube, pulse: PulseModel, cfg: DetectorConfig | None = None,
                            signal_photons: float | None = None) -> np.ndarray:
    cfg = cfg or cube.meta
    if signal_photons is None:
        signal_photons = estimate_signal(cube, cfg)
    weights, lo = log_template(pulse, cfg, signal_photons)
    return kernels.matched_filter_argmax(_counts(cube), weights, lo)


def log_matched_filter(cube, pulse: PulseModel, cfg: DetectorConfig | None = None,
                       signal_photons: float | None = None) -> DepthImage:
    """Poisson maximum-likelihood shift of a pulse template.

    Each candidate shift ``d`` scores ``sum_k h_k log(1 + A s_{k-d} / b)``,
    with ``b`` the per-bin background (floored at 1e-12) and ``A`` the signal
    level, estimated from the cube when not given.  Template taps past the
    cube edges are dropped rather than wrapped.
    """
    cfg = cfg or cube.meta
    return decode_bins(log_matched_filter_bins(cube, pulse, cfg, signal_photons), cfg)
