"""Binary model checkpoints.

Layout (little-endian)::

    b"PRSM"  u32 version
    u32 len  JSON {"model": PrsNetConfig, "train": {...}}
    u32 count
    count x { u16 len, name, u8 kind (0 weight, 1 buffer), u8 ndim, ndim x u32, f8 data }

Adam moments are not stored; a loaded model is for inference or a fresh run.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..io import FormatError, atomic_write
from .model import ModelParams, PrsNetConfig

MAGIC = b"PRSM"
VERSION = 1
_KINDS = {0: "weights", 1: "buffers"}


def encode_model(cfg: PrsNetConfig, params: ModelParams, extra: dict | None = None) -> bytes:
    meta = json.dumps({"model": cfg.to_dict(), "train": extra or {}}, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta)), meta]
    entries = [(0, k, a) for k, a in sorted(params.weights.items())]
    entries += [(1, k, a) for k, a in sorted(params.buffers.items())]
    out.append(struct.pack("<I", len(entries)))
    for kind, name, a in entries:
        raw = name.encode()
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<BB", kind, a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(out)


def decode_model(data: bytes):
    """Returns ``(PrsNetConfig, ModelParams, train_meta)``."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated model file")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError("not a model file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}")
    (n,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(n)))
    (count,) = struct.unpack("<I", take(4))
    groups = {"weights": {}, "buffers": {}}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = bytes(take(n)).decode()
        kind, ndim = struct.unpack("<BB", take(2))
        if kind not in _KINDS:
            raise FormatError(f"unknown entry kind {kind} for {name}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        groups[_KINDS[kind]][name] = arr
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after model payload")
    cfg = PrsNetConfig.from_dict(meta["model"])
    return cfg, ModelParams(groups["weights"], groups["buffers"]), meta.get("train", {})


def save_model(path, cfg: PrsNetConfig, params: ModelParams, extra: dict | None = None) -> None:
    atomic_write(path, encode_model(cfg, params, extra))


def load_model(path):
    with open(path, "rb") as f:
        return decode_model(f.read())
