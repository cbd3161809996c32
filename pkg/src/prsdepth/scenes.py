"""Synthetic piecewise-smooth scenes with step edges."""
from __future__ import annotations

import numpy as np

from .core import DetectorConfig, Scene

KINDS = ("staircase", "wedge", "blocks")


def blocks_layout(M: int, N: int, z_near: float, z_far: float):
    """Rectangles ``(r0, r1, c0, c1, depth)`` placed on a far background.

    The two blocks keep at least two pixels from each other and from the image
    border, so their edge rings never touch.
    """
    if M < 8 or N < 8:
        raise ValueError("blocks scenes need at least 8x8 pixels")
    h1, w1 = max(1, M // 3), max(1, N // 3)
    h2, w2 = max(1, M // 4), max(1, N // 4)
    mid = 0.5 * (z_near + z_far)
    return [
        (2, 2 + h1, 2, 2 + w1, z_near),
        (M - 2 - h2, M - 2, N - 2 - w2, N - 2, mid),
    ]


def synth_scene(kind: str, M: int, N: int, depth_range=(1.0, 4.0), steps: int = 4,
                reflectivity: str = "constant", cfg: DetectorConfig | None = None) -> Scene:
    """Build a ``staircase``, ``wedge`` or ``blocks`` scene.

    Staircases have ``steps`` equal-width column bands at evenly spaced
    depths; wedges ramp linearly across columns; blocks put two rectangles in
    front of a flat background at the far depth.  ``reflectivity`` is either
    ``"constant"`` (1 everywhere) or ``"ramp"`` (0.5 to 1 down the rows).
    """
    z0, z1 = map(float, depth_range)
    if not 0 < z0 <= z1:
        raise ValueError(f"invalid depth range {depth_range}")
    if cfg is not None and z1 >= cfg.max_range:
        raise ValueError(f"depth range {depth_range} exceeds unambiguous range {cfg.max_range:.6g} m")
    cols = np.arange(N)
    if kind == "staircase":
        idx = cols * steps // N
        Z = np.broadcast_to(np.linspace(z0, z1, steps)[idx], (M, N)).copy()
    elif kind == "wedge":
        ramp = z0 + (z1 - z0) * cols / max(N - 1, 1)
        Z = np.broadcast_to(ramp, (M, N)).copy()
    elif kind == "blocks":
        Z = np.full((M, N), z1)
        for r0, r1, c0, c1, d in blocks_layout(M, N, z0, z1):
            Z[r0:r1, c0:c1] = d
    else:
        raise ValueError(f"unknown scene kind {kind!r}; expected one of {KINDS}")
    if reflectivity == "constant":
        alpha = np.ones((M, N))
    elif reflectivity == "ramp":
        alpha = np.broadcast_to(np.linspace(0.5, 1.0, M)[:, None], (M, N)).copy()
    else:
        raise ValueError(f"unknown reflectivity profile {reflectivity!r}")
    return Scene(Z, alpha)


def edge_mask(Z: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour at a different depth."""
    Z = np.asarray(Z)
    m = np.zeros(Z.shape, dtype=bool)
    dv = Z[1:, :] != Z[:-1, :]
    dh = Z[:, 1:] != Z[:, :-1]
    m[1:, :] |= dv
    m[:-1, :] |= dv
    m[:, 1:] |= dh
    m[:, :-1] |= dh
    return m


def random_scene(rng: np.random.Generator, M: int, N: int, cfg: DetectorConfig,
                 margin: float = 0.1) -> Scene:
    """Random kind, depth span, orientation and reflectivity profile.

    Depths stay inside ``[margin, 1 - margin]`` of the unambiguous range.
    """
    R = cfg.max_range
    lo, hi = np.sort(rng.uniform(margin * R, (1 - margin) * R, size=2))
    if hi - lo < 0.1 * R:
        lo, hi = max(margin * R, lo - 0.05 * R), min((1 - margin) * R, hi + 0.05 * R)
    kind = KINDS[rng.integers(len(KINDS))]
    scene = synth_scene(kind, max(M, 8), max(N, 8), (lo, hi), steps=int(rng.integers(2, 6)),
                        reflectivity="ramp" if rng.random() < 0.5 else "constant")
    Z, alpha = scene.Z[:M, :N], scene.alpha[:M, :N]
    k = int(rng.integers(4))
    if M == N:
        Z, alpha = np.rot90(Z, k), np.rot90(alpha, k)
    if rng.random() < 0.5:
        Z, alpha = Z[::-1], alpha[::-1]
    if rng.random() < 0.5:
        Z, alpha = Z[:, ::-1], alpha[:, ::-1]
    return Scene(Z, alpha)
