import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prsdepth import kernels
from prsdepth.core import DetectorConfig, PhotonCube, PulseModel
from prsdepth.scenes import synth_scene
from prsdepth.shrinkage import (
    ThresholdMap, classic_denoise, pixel_thresholds, residual_denoise, soft_threshold,
    soft_threshold_backward,
)
from prsdepth.simulator import SbrTarget, simulate
from prsdepth.baselines import argmax_depth
from prsdepth.loss_metrics import rmse
from prsdepth.windowing import WindowConfig, temporal_window

reals = st.floats(-1e6, 1e6, allow_nan=False)
taus = st.floats(0, 1e6, allow_nan=False)


def test_branches():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.4, 1.0) == 0.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    x = np.linspace(-5, 5, 41)
    assert np.array_equal(soft_threshold(x, 0.0), x)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_backward_values():
    dx, dt = soft_threshold_backward(3.0, 1.0, 1.0)
    assert (dx, dt) == (1.0, -1.0)
    dx, dt = soft_threshold_backward(-0.4, 1.0, 1.0)
    assert (dx, dt) == (0.0, 0.0)
    # kinks take the dead-zone branch
    dx, dt = soft_threshold_backward(np.array([1.0, -1.0]), 1.0, np.ones(2))
    assert not dx.any() and not dt.any()


def test_backward_finite_difference_point():
    x, tau, h = 2.0, 0.7, 1e-6
    dx, dt = soft_threshold_backward(x, tau, 1.0)
    fx = (soft_threshold(x + h, tau) - soft_threshold(x - h, tau)) / (2 * h)
    ft = (soft_threshold(x, tau + h) - soft_threshold(x, tau - h)) / (2 * h)
    assert abs(dx - fx) <= 1e-6 * abs(fx) and abs(dt - ft) <= 1e-6 * abs(ft)


def test_backward_random_points_away_from_kinks():
    rng = np.random.default_rng(0)
    h = 1e-6
    x = rng.uniform(-3, 3, size=100)
    tau = rng.uniform(0, 2, size=100)
    keep = np.abs(np.abs(x) - tau) > 10 * h
    x, tau = x[keep], tau[keep]
    dx, dt = soft_threshold_backward(x, tau, np.ones_like(x))
    fx = (soft_threshold(x + h, tau) - soft_threshold(x - h, tau)) / (2 * h)
    ft = (soft_threshold(x, tau + h) - soft_threshold(x, tau - h)) / (2 * h)
    err = lambda a, b: np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)
    assert err(dx, fx).max() <= 1e-6 and err(dt, ft).max() <= 1e-6


@settings(max_examples=300, deadline=None)
@given(reals, reals, taus)
def test_non_expansive(x, y, tau):
    assert abs(soft_threshold(x, tau) - soft_threshold(y, tau)) <= abs(x - y) * (1 + 1e-12) + 1e-9


@settings(max_examples=300, deadline=None)
@given(reals, taus)
def test_dead_zone_and_magnitude(x, tau):
    f = soft_threshold(x, tau)
    assert (f == 0) == (abs(x) <= tau)
    assert abs(f) <= abs(x)
    assert f == 0 or np.sign(f) == np.sign(x)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def test_threshold_homogeneity(lam, seed):
    rng = np.random.default_rng(seed)
    Xr = rng.normal(size=(2, 6, 3, 3))
    S = rng.uniform(size=(2, 3, 3))
    t1 = pixel_thresholds(Xr, S).tau
    t2 = pixel_thresholds(lam * Xr, S).tau
    assert np.allclose(t2, lam * t1, rtol=1e-12, atol=0)


def test_pixel_thresholds_examples():
    Xr = np.array([1.0, -2.0, 3.0, -4.0]).reshape(1, 4, 1, 1)
    assert pixel_thresholds(Xr, np.full((1, 1, 1), 0.4)).tau[0, 0, 0] == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    Xr = rng.normal(size=(3, 5, 2, 2))
    assert not pixel_thresholds(Xr, np.zeros((3, 2, 2))).tau.any()
    const = np.full((1, 5, 1, 1), -2.5)
    tm = pixel_thresholds(const, np.ones((1, 1, 1)))
    assert tm.tau[0, 0, 0] == 2.5
    assert not soft_threshold(const[0, :, 0, 0], tm.tau[0, 0, 0]).any()
    with pytest.raises(ValueError):
        ThresholdMap(np.array([1.2]), np.array([0.0]))
    with pytest.raises(ValueError):
        ThresholdMap(np.array([0.5]), np.array([-1.0]))


def test_residual_denoise():
    rng = np.random.default_rng(0)
    X, Xd = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
    assert np.array_equal(residual_denoise(X, np.zeros_like(X)), X)
    assert np.array_equal(residual_denoise(np.zeros_like(X), Xd), Xd)
    assert np.allclose(residual_denoise(2 * X, 2 * Xd), 2 * residual_denoise(X, Xd))
    with pytest.raises(ValueError):
        residual_denoise(X, Xd[..., :2])


def test_kernel_matches_reference():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6, 7, 30))
    tau = rng.uniform(0, 1, size=(6, 7))
    assert np.array_equal(kernels.soft_threshold(x, tau), soft_threshold(x, tau[..., None]))


def test_classic_denoise_examples():
    cfg = DetectorConfig(T=32)
    rng = np.random.default_rng(0)
    cube = PhotonCube(rng.poisson(1.0, size=(4, 4, 32)), cfg)
    w = WindowConfig(5)
    assert np.array_equal(classic_denoise(cube, w, 0.0), temporal_window(cube, w))
    flat = PhotonCube(np.full((2, 2, 32), 3), cfg)
    assert not classic_denoise(flat, WindowConfig(1), 1.0).any()
    out = classic_denoise(cube, w, 0.5)
    assert np.all(out >= 0)
    with pytest.raises(ValueError):
        classic_denoise(cube, w, 1.5)


def test_classic_denoise_beats_raw_argmax():
    det = DetectorConfig(T=1024)
    pulse = PulseModel()
    scene = synth_scene("staircase", 32, 32, (1.0, 10.0), cfg=det)
    cube = simulate(scene, det, pulse, SbrTarget(2, 50), seed=7)
    raw = rmse(scene.Z, argmax_depth(cube))
    den = rmse(scene.Z, argmax_depth(classic_denoise(cube, WindowConfig(5)), det))
    assert den <= raw
