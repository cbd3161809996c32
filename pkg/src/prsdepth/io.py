"""On-disk formats and histogram rebinning.

Cube files (``.spcb``)::

    b"SPCB"  u8 version=1  u32 T  u32 M  u32 N  u32 bin_ps   (little-endian)
    T*M*N u32 counts, pixel-major: index ((i*N)+j)*T + t

Depth files are little-endian portable float maps (``Pf``, negative scale,
rows stored bottom to top).  Writes go to a temporary file that is renamed
into place.
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .core import DepthImage, DetectorConfig, PhotonCube

CUBE_MAGIC = b"SPCB"
CUBE_VERSION = 1
_CUBE_HEADER = struct.Struct("<4sB4I")
_U32_MAX = 2**32 - 1


class FormatError(ValueError):
    """Malformed or truncated file."""


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_cube(cube: PhotonCube) -> bytes:
    M, N, T = cube.shape
    bin_ps = round(cube.meta.delta * 1e12)
    if abs(bin_ps * 1e-12 - cube.meta.delta) > 1e-3 * cube.meta.delta or bin_ps < 1:
        raise FormatError(f"bin duration {cube.meta.delta} s is not a whole number of picoseconds")
    if max(M, N, T, bin_ps) > _U32_MAX:
        raise FormatError("cube dimensions overflow the 32-bit header fields")
    if cube.counts.size and int(cube.counts.max()) > _U32_MAX:
        raise FormatError("counts overflow 32 bits")
    header = _CUBE_HEADER.pack(CUBE_MAGIC, CUBE_VERSION, T, M, N, bin_ps)
    return header + np.ascontiguousarray(cube.counts, dtype="<u4").tobytes()


def decode_cube(data: bytes) -> PhotonCube:
    if len(data) < _CUBE_HEADER.size:
        raise FormatError("truncated cube header")
    magic, version, T, M, N, bin_ps = _CUBE_HEADER.unpack_from(data)
    if magic != CUBE_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CUBE_MAGIC!r}")
    if version != CUBE_VERSION:
        raise FormatError(f"unsupported cube version {version}")
    if T < 1 or bin_ps < 1:
        raise FormatError("cube header declares zero bins or zero bin width")
    expected = 4 * T * M * N
    payload = len(data) - _CUBE_HEADER.size
    if payload != expected:
        raise FormatError(f"payload is {payload} bytes but the header implies {expected}")
    counts = np.frombuffer(data, dtype="<u4", offset=_CUBE_HEADER.size).reshape(M, N, T)
    return PhotonCube(counts.astype(np.int64), DetectorConfig(T=T, delta=bin_ps * 1e-12))


def write_cube(path, cube: PhotonCube) -> None:
    atomic_write(path, encode_cube(cube))


def read_cube(path) -> PhotonCube:
    with open(path, "rb") as f:
        return decode_cube(f.read())


def encode_pfm(z) -> bytes:
    z = np.asarray(z.z if isinstance(z, DepthImage) else z)
    if z.ndim != 2:
        raise FormatError("depth maps must be 2-D")
    H, W = z.shape
    header = f"Pf\n{W} {H}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(z[::-1], dtype="<f4").tobytes()


def decode_pfm(data: bytes) -> np.ndarray:
    """Returns a float32 ``(H, W)`` array, top row first."""
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PFM header")
        fields.append(data[start:pos].decode("ascii", "replace"))
    pos += 1  # single whitespace byte ends the header
    kind, w, h, scale = fields
    if kind != "Pf":
        raise FormatError(f"only single-channel 'Pf' maps are supported, got {kind!r}")
    try:
        W, H, scale = int(w), int(h), float(scale)
    except ValueError as e:
        raise FormatError(f"bad PFM header: {e}") from None
    dtype = "<f4" if scale < 0 else ">f4"
    if len(data) - pos != 4 * W * H:
        raise FormatError(f"PFM payload is {len(data) - pos} bytes, expected {4 * W * H}")
    z = np.frombuffer(data, dtype=dtype, offset=pos).reshape(H, W)[::-1]
    return z.astype(np.float32)


def write_depth(path, z) -> None:
    atomic_write(path, encode_pfm(z))


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pfm(f.read())


def rebin_pairs(h, target: int | None = None, axis: int = -1) -> np.ndarray:
    """Sum neighbouring bin pairs, then zero-pad the tail up to ``target`` bins.

    An odd trailing bin is kept on its own.  ``target`` defaults to
    ``ceil(T / 2)`` (no padding).
    """
    h = np.moveaxis(np.asarray(h), axis, -1)
    T = h.shape[-1]
    half = (T + 1) // 2
    target = half if target is None else int(target)
    if target < half:
        raise ValueError(f"target {target} is shorter than the {half} summed bins")
    out = np.zeros(h.shape[:-1] + (target,), dtype=h.dtype)
    out[..., : T // 2] = h[..., 0:T - T % 2:2] + h[..., 1:T:2]
    if T % 2:
        out[..., half - 1] = h[..., -1]
    return np.moveaxis(out, -1, axis)


def rebin_cube(cube: PhotonCube, target: int | None = None) -> PhotonCube:
    """Pair-summed cube with doubled bin width, e.g. 1536 x 26 ps -> 1024 x 52 ps."""
    counts = rebin_pairs(cube.counts, target)
    meta = cube.meta.replace(T=counts.shape[-1], delta=2 * cube.meta.delta)
    return PhotonCube(counts, meta)
