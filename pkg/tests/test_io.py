import os
import struct

import numpy as np
import pytest

from prsdepth import io
from prsdepth.core import DetectorConfig, PhotonCube
from prsdepth.loss_metrics import tv_loss
from prsdepth.scenes import blocks_layout, edge_mask, random_scene, synth_scene


def _cube(M=8, N=4, T=4, seed=0, delta=80e-12):
    rng = np.random.default_rng(seed)
    return PhotonCube(rng.integers(0, 2**32 - 1, size=(M, N, T), dtype=np.uint64), DetectorConfig(T=T, delta=delta))


def test_cube_round_trip(tmp_path):
    c = _cube()
    p = tmp_path / "c.spcb"
    io.write_cube(p, c)
    back = io.read_cube(p)
    assert np.array_equal(back.counts, c.counts) and back.meta.T == 4
    assert back.meta.delta == pytest.approx(80e-12)
    io.write_cube(tmp_path / "d.spcb", back)
    assert (tmp_path / "d.spcb").read_bytes() == p.read_bytes()


def test_cube_layout_is_bit_exact():
    c = PhotonCube(np.arange(2 * 3 * 5).reshape(2, 3, 5), DetectorConfig(T=5, delta=52e-12))
    raw = io.encode_cube(c)
    assert raw[:4] == b"SPCB" and raw[4] == 1
    assert struct.unpack_from("<4I", raw, 5) == (5, 2, 3, 52)
    payload = np.frombuffer(raw, dtype="<u4", offset=21)
    i, j, t = 1, 2, 3
    assert payload[((i * 3) + j) * 5 + t] == c.counts[i, j, t]
    assert len(raw) == 21 + 4 * 30


def test_cube_errors():
    raw = io.encode_cube(_cube())
    with pytest.raises(io.FormatError, match="magic"):
        io.decode_cube(b"XPCB" + raw[4:])
    with pytest.raises(io.FormatError, match="payload"):
        io.decode_cube(raw[:-4])
    with pytest.raises(io.FormatError, match="payload"):
        io.decode_cube(raw + b"\0\0\0\0")
    with pytest.raises(io.FormatError):
        io.decode_cube(raw[:10])
    with pytest.raises(io.FormatError, match="version"):
        io.decode_cube(raw[:4] + b"\x02" + raw[5:])
    big = PhotonCube(np.full((1, 1, 2), 2**32), DetectorConfig(T=2))
    with pytest.raises(io.FormatError, match="overflow"):
        io.encode_cube(big)
    with pytest.raises(io.FormatError):
        io.encode_cube(PhotonCube(np.zeros((1, 1, 2), int), DetectorConfig(T=2, delta=0.3e-12)))


def test_pfm_round_trip(tmp_path):
    z = np.random.default_rng(0).uniform(0, 10, size=(5, 7)).astype(np.float32)
    p = tmp_path / "z.pfm"
    io.write_depth(p, z)
    raw = p.read_bytes()
    assert raw.startswith(b"Pf\n7 5\n-1.0\n")
    # bottom row first
    first = np.frombuffer(raw, dtype="<f4", count=7, offset=len(b"Pf\n7 5\n-1.0\n"))
    assert np.array_equal(first, z[-1])
    back = io.read_depth(p)
    assert back.dtype == np.float32 and np.array_equal(back, z)
    z64 = z.astype(np.float64) + 1e-9
    assert np.allclose(io.decode_pfm(io.encode_pfm(z64)), z64, rtol=1e-7)


def test_pfm_big_endian_and_errors():
    z = np.arange(6, dtype=np.float32).reshape(2, 3)
    be = b"Pf\n3 2\n1.0\n" + z[::-1].astype(">f4").tobytes()
    assert np.array_equal(io.decode_pfm(be), z)
    with pytest.raises(io.FormatError):
        io.decode_pfm(b"PF\n3 2\n-1.0\n" + bytes(72))
    with pytest.raises(io.FormatError):
        io.decode_pfm(b"Pf\n3 2\n-1.0\n" + bytes(8))
    with pytest.raises(io.FormatError):
        io.decode_pfm(b"Pf\n3")
    with pytest.raises(io.FormatError):
        io.encode_pfm(np.zeros(3))


def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "x.bin"
    io.atomic_write(p, b"abc")
    io.atomic_write(p, b"defg")
    assert p.read_bytes() == b"defg"
    assert os.listdir(tmp_path) == ["x.bin"]


def test_rebin_pairs():
    assert io.rebin_pairs(np.array([1, 2, 3, 4]), 4).tolist() == [3, 7, 0, 0]
    assert io.rebin_pairs(np.array([1, 2, 3])).tolist() == [3, 3]
    rng = np.random.default_rng(0)
    h = rng.poisson(3, size=(4, 5, 37))
    assert io.rebin_pairs(h, 30).sum() == h.sum()
    with pytest.raises(ValueError):
        io.rebin_pairs(np.arange(10), 4)


def test_rebin_1536_layout():
    rng = np.random.default_rng(1)
    c = PhotonCube(rng.poisson(0.2, size=(3, 3, 1536)), DetectorConfig(T=1536, delta=26e-12))
    r = io.rebin_cube(c, 1024)
    assert r.T == 1024 and r.meta.delta == pytest.approx(52e-12)
    assert not r.counts[..., 768:].any()
    assert np.array_equal(r.counts[..., 5], c.counts[..., 10] + c.counts[..., 11])
    assert r.counts.sum() == c.counts.sum()


def test_synth_scenes():
    s = synth_scene("staircase", 16, 16, (1.0, 4.0), steps=4)
    assert len(np.unique(s.Z)) == 4
    w = synth_scene("wedge", 6, 9, (1.0, 3.0))
    # each row ramps monotonically; TV is M * (z1 - z0) horizontally
    assert tv_loss(w.Z)[0] == pytest.approx(6 * 2.0)
    b = synth_scene("blocks", 16, 16, (1.0, 3.0))
    ref = np.zeros((16, 16), dtype=bool)
    for r0, r1, c0, c1, _ in blocks_layout(16, 16, 1.0, 3.0):
        box = np.zeros((16, 16), dtype=bool)
        box[r0:r1, c0:c1] = True
        inner = np.zeros_like(box)
        inner[r0 + 1:r1 - 1, c0 + 1:c1 - 1] = True
        ring_in = box & ~inner
        grown = np.zeros_like(box)
        grown[max(r0 - 1, 0):r1 + 1, max(c0 - 1, 0):c1 + 1] = True
        ring_out = grown & ~box
        corners = [(r0 - 1, c0 - 1), (r0 - 1, c1), (r1, c0 - 1), (r1, c1)]
        for rc in corners:
            ring_out[rc] = False
        ref |= ring_in | ring_out
    assert edge_mask(b.Z).sum() == ref.sum()
    assert np.array_equal(edge_mask(b.Z), ref)
    r = synth_scene("staircase", 8, 8, (1.0, 2.0), reflectivity="ramp")
    assert r.alpha[0, 0] == 0.5 and r.alpha[-1, 0] == 1.0
    with pytest.raises(ValueError):
        synth_scene("sphere", 8, 8)
    with pytest.raises(ValueError):
        synth_scene("wedge", 8, 8, (3.0, 1.0))
    with pytest.raises(ValueError):
        synth_scene("wedge", 8, 8, (1.0, 100.0), cfg=DetectorConfig(T=64))


def test_random_scene_in_range():
    cfg = DetectorConfig(T=64)
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = random_scene(rng, 16, 16, cfg)
        s.check_range(cfg)
        assert s.Z.min() >= 0.1 * cfg.max_range - 1e-12
        assert s.Z.max() <= 0.9 * cfg.max_range + 1e-12
