"""Domain types and physical constants shared by every stage of the pipeline.

Cubes are stored pixel-major: ``counts[i, j, t]`` with shape ``(M, N, T)``, so
the flat index of bin ``t`` of pixel ``(i, j)`` is ``((i * N) + j) * T + t``.
All per-pixel algorithms run along the last, contiguous axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
PULSE_TRUNCATION_SIGMAS = 3.0


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DetectorConfig:
    """Timing and efficiency parameters of the SPAD detector.

    ``n_b`` is the background plus dark-count rate in counts per second and
    ``n_illum`` the number of laser repetitions accumulated into a histogram.
    """

    T: int = 1024
    delta: float = 80e-12
    eta: float = 1.0
    n_b: float = 0.0
    n_illum: int = 1
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if not self.delta > 0:
            raise ValueError(f"bin duration must be positive, got {self.delta}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"quantum efficiency must lie in (0, 1], got {self.eta}")
        if self.n_b < 0:
            raise ValueError(f"background rate must be >= 0, got {self.n_b}")
        if int(self.n_illum) != self.n_illum or self.n_illum < 1:
            raise ValueError(f"n_illum must be a positive integer, got {self.n_illum}")

    @property
    def bin_width_m(self) -> float:
        return bin_depth_width(self)

    @property
    def max_range(self) -> float:
        """Largest unambiguous depth, ``T * delta * c / 2``."""
        return self.T * self.bin_width_m

    def replace(self, **changes) -> "DetectorConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class PulseModel:
    """Unit-area Gaussian laser pulse truncated at +-3 sigma."""

    fwhm: float = 400e-12

    def __post_init__(self):
        if self.fwhm < 0:
            raise ValueError(f"fwhm must be >= 0, got {self.fwhm}")

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA

    @property
    def half_support(self) -> float:
        return PULSE_TRUNCATION_SIGMAS * self.sigma


@dataclass(frozen=True, eq=False)
class Scene:
    """Ground truth depth ``Z`` (meters) and reflectivity ``alpha`` in [0, 1]."""

    Z: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        Z = np.array(self.Z, dtype=np.float64)
        alpha = np.array(self.alpha, dtype=np.float64)
        if alpha.ndim == 0:
            alpha = np.full_like(Z, float(alpha))
        if Z.ndim != 2 or Z.shape != alpha.shape:
            raise ValueError(f"Z and alpha must be matching 2-D arrays, got {Z.shape} and {alpha.shape}")
        if not np.all(np.isfinite(Z)):
            raise ValueError("depths must be finite")
        if np.any((alpha < 0) | (alpha > 1)):
            raise ValueError("reflectivity must lie in [0, 1]")
        object.__setattr__(self, "Z", _freeze(Z))
        object.__setattr__(self, "alpha", _freeze(alpha))

    @property
    def shape(self) -> tuple[int, int]:
        return self.Z.shape

    def check_range(self, cfg: DetectorConfig) -> None:
        """Raise if any depth is outside ``(0, T * delta * c / 2)``."""
        if np.any(self.Z <= 0) or np.any(self.Z >= cfg.max_range):
            raise ValueError(
                f"scene depths must lie in (0, {cfg.max_range:.6g}) m to avoid range aliasing; "
                f"got [{self.Z.min():.6g}, {self.Z.max():.6g}]"
            )


@dataclass(frozen=True, eq=False)
class PhotonCube:
    """Per-pixel photon arrival histograms, ``counts`` of shape ``(M, N, T)``."""

    counts: np.ndarray
    meta: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        counts = np.array(self.counts, order="C")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)) or np.any(counts != np.round(counts)):
                raise ValueError("photon counts must be integers")
            counts = counts.astype(np.int64)
        object.__setattr__(self, "counts", _freeze(counts))
        report = validate_cube(counts, self.meta)
        if not report.ok:
            raise ValueError(report.message)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts.shape

    @property
    def T(self) -> int:
        return self.counts.shape[-1]

    def time_major(self) -> np.ndarray:
        """Counts as a ``(T, M, N)`` array."""
        return np.moveaxis(self.counts, -1, 0)

    @classmethod
    def from_time_major(cls, h: np.ndarray, meta: DetectorConfig) -> "PhotonCube":
        return cls(np.moveaxis(np.asarray(h), 0, -1), meta)


@dataclass(frozen=True, eq=False)
class DepthImage:
    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64)
        if z.ndim != 2:
            raise ValueError(f"depth image must be 2-D, got shape {z.shape}")
        if not np.all(np.isfinite(z)) or np.any(z < 0):
            raise ValueError("depths must be finite and non-negative")
        object.__setattr__(self, "z", _freeze(z))

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape


@dataclass(frozen=True, eq=False)
class Prediction:
    """Network output: per-pixel distributions over bins and their statistics.

    ``p_hat`` has shape ``(M, N, T)``; ``k_bar`` is the 1-based mean bin and
    ``V`` the pixel-averaged variance in bins squared.
    """

    p_hat: np.ndarray
    z_hat: DepthImage
    k_bar: np.ndarray
    V: float

    def __post_init__(self):
        sums = self.p_hat.sum(axis=-1)
        if np.any(self.p_hat < 0) or np.max(np.abs(sums - 1.0)) > 1e-6:
            raise ValueError("p_hat rows must be non-negative and sum to 1")


def bin_depth_width(cfg: DetectorConfig) -> float:
    """Depth spanned by one time bin, ``delta * c / 2`` meters."""
    if not cfg.delta > 0:
        raise ValueError("bin duration must be positive")
    return cfg.delta * cfg.c / 2.0


@dataclass(frozen=True)
class CubeReport:
    ok: bool
    message: str = "ok"
    index: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_cube(cube, meta: DetectorConfig | None = None) -> CubeReport:
    """Return the first invariant violation of a cube or an ok report.

    Accepts a :class:`PhotonCube` or a raw ``(M, N, T)`` array plus ``meta``,
    so that malformed data can be inspected before it is wrapped.
    """
    if isinstance(cube, PhotonCube):
        counts, meta = np.asarray(cube.counts), cube.meta
    else:
        counts = np.asarray(cube)
    if counts.ndim != 3:
        return CubeReport(False, f"cube must be 3-D (M, N, T), got {counts.ndim}-D")
    if meta is not None and counts.shape[-1] != meta.T:
        return CubeReport(
            False, f"cube has {counts.shape[-1]} bins but detector config declares T={meta.T}"
        )
    neg = np.flatnonzero(counts.reshape(-1) < 0)
    if neg.size:
        idx = tuple(int(v) for v in np.unravel_index(neg[0], counts.shape))
        return CubeReport(False, f"negative count {counts[idx]} at (i, j, t)={idx}", idx)
    return CubeReport(True)
