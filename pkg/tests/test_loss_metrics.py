import math

import numpy as np
import pytest

from prsdepth.core import DepthImage, DetectorConfig, PulseModel, bin_depth_width
from prsdepth.loss_metrics import (
    LabelCube, LossConfig, accuracy_delta, avg_variance, ce_loss, csv_header, csv_row,
    depth_to_bin, evaluate, format_report, kl_loss, mean_bin, pulse_targets, rmse, soft_argmax,
    softmax, total_loss, tv_loss,
)

DET = DetectorConfig(T=1024, delta=80e-12)
W = bin_depth_width(DET)


# brute-force double-loop references

def rmse_ref(Z, Zh):
    M, N = Z.shape
    s = 0.0
    for i in range(M):
        for j in range(N):
            d = Z[i, j] - Zh[i, j]
            s += d * d
    return math.sqrt(s / (M * N))


def acc_ref(Z, Zh, d):
    M, N = Z.shape
    hits = 0
    for i in range(M):
        for j in range(N):
            if max(Zh[i, j] / Z[i, j], Z[i, j] / Zh[i, j]) < d:
                hits += 1
    return hits / (M * N)


def var_ref(p):
    M, N, T = p.shape
    total = 0.0
    for i in range(M):
        for j in range(N):
            kbar = 0.0
            for k in range(T):
                kbar += (k + 1) * p[i, j, k]
            v = 0.0
            for k in range(T):
                d = (k + 1) - kbar
                v += p[i, j, k] * (d * d)
            total += v
    return total / (M * N)


def tv_ref(z):
    M, N = z.shape
    s = 0.0
    for i in range(M):
        for j in range(N):
            if i + 1 < M:
                s += abs(z[i + 1, j] - z[i, j])
            if j + 1 < N:
                s += abs(z[i, j + 1] - z[i, j])
    return s


def test_depth_to_bin():
    assert depth_to_bin(1.2, DET) == 100
    assert depth_to_bin(0.0, DET) == 0
    assert depth_to_bin(W * 0.999, DET) == 0
    assert depth_to_bin(W, DET) == 1
    assert depth_to_bin(1e9, DET) == DET.T - 1
    assert depth_to_bin(np.array([[1.2, 0.0]]), DET).tolist() == [[100, 0]]
    with pytest.raises(ValueError):
        depth_to_bin(-0.1, DET)


def test_label_cube():
    y = np.array([[0, 3], [2, 1]])
    lc = LabelCube(y, 4)
    assert lc.P.shape == (2, 2, 4) and np.all(lc.P.sum(-1) == 1)
    assert lc.P[0, 1, 3] == 1
    with pytest.raises(ValueError):
        LabelCube(np.array([[4]]), 4)
    assert LabelCube.from_depth(np.array([[1.2]]), DET).y[0, 0] == 100


def test_ce_loss_values():
    P = LabelCube(np.array([[1, 2]]), 4).P
    assert ce_loss(P, P)[0] == pytest.approx(0.0, abs=1e-15)
    assert ce_loss(P, np.full((1, 2, 4), 0.25))[0] == pytest.approx(math.log(4))
    _, g = ce_loss(P, softmax(np.random.default_rng(0).normal(size=(1, 2, 4))))
    assert np.allclose(g.sum(-1), 0, atol=1e-15)
    # guarded log: zero probability on the label stays finite
    assert np.isfinite(ce_loss(P, LabelCube(np.array([[0, 0]]), 4).P)[0])


def test_kl_loss_zero_at_target():
    Q = pulse_targets(np.array([[1.2, 2.0]]), DET, PulseModel())
    assert np.allclose(Q.sum(-1), 1)
    assert kl_loss(Q, Q)[0] == pytest.approx(0.0, abs=1e-12)
    assert kl_loss(Q, np.full_like(Q, 1 / DET.T))[0] > 0


def test_softmax_valid_for_extreme_logits():
    z = np.array([[1000.0, -1000.0, 0.0], [-1e300, -1e300, -1e300]])
    p = softmax(z)
    assert np.all(p >= 0) and np.allclose(p.sum(-1), 1, atol=1e-6)


def test_soft_argmax_examples():
    p = np.zeros((1, 1, DET.T))
    p[0, 0, 99] = 1.0  # 100th bin in 1-based numbering
    assert soft_argmax(p, DET).z[0, 0] == pytest.approx(1.19917, abs=1e-5)
    u = np.full((1, 1, DET.T), 1 / DET.T)
    assert soft_argmax(u, DET).z[0, 0] == pytest.approx(W * (DET.T + 1) / 2)
    b = np.zeros((1, 1, DET.T))
    b[0, 0, [10, 30]] = 0.5
    assert soft_argmax(b, DET).z[0, 0] == pytest.approx(W * 21)


def test_soft_argmax_hard_consistency():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(5, 5, 64))
    hard = np.argmax(logits, -1)
    np.put_along_axis(logits, hard[..., None], logits.max(-1, keepdims=True) + 1.0, -1)
    prev = None
    for beta in (1, 4, 16, 64, 256):
        p = softmax(beta * logits)
        gap = np.abs(soft_argmax(p, DET).z - (hard + 1) * W).max()
        if prev is not None:
            assert gap <= prev + 1e-12
        prev = gap
    assert prev < 1e-6
    onehot = LabelCube(hard, 64).P
    assert np.array_equal(soft_argmax(onehot, DET).z, (hard + 1) * W)


def test_tv_loss():
    assert tv_loss(np.ones((4, 5)))[0] == 0
    assert tv_loss(np.array([[1.0, 2.0], [3.0, 4.0]]))[0] == 6
    z = np.random.default_rng(0).normal(size=(6, 7))
    assert tv_loss(z + 3.0)[0] == pytest.approx(tv_loss(z)[0])
    assert tv_loss(z)[0] == pytest.approx(tv_ref(z), rel=1e-14)
    assert tv_loss(DepthImage(np.abs(z)))[0] == pytest.approx(tv_ref(np.abs(z)), rel=1e-14)
    # subgradient at exact ties is zero
    _, g = tv_loss(np.ones((3, 3)))
    assert not g.any()


def test_total_loss_reduces_to_ce_and_zero():
    rng = np.random.default_rng(0)
    T = 8
    p = softmax(rng.normal(size=(3, 3, T)))
    P = LabelCube(rng.integers(0, T, size=(3, 3)), T)
    det = DetectorConfig(T=T)
    L0, g0 = total_loss(P, p, LossConfig(0.0), det)
    Lc, gc = ce_loss(P, p)
    assert L0 == Lc and np.array_equal(g0, gc)
    const = LabelCube(np.full((3, 3), 2), T)
    assert total_loss(const, const.P, LossConfig(1.0), det)[0] == pytest.approx(0.0, abs=1e-15)


def test_total_loss_gradient_3x3x8():
    from prsdepth.nn.gradcheck import grad_check

    rng = np.random.default_rng(3)
    T = 8
    det = DetectorConfig(T=T)
    logits = rng.normal(scale=2.0, size=(3, 3, T))
    P = LabelCube(rng.integers(0, T, size=(3, 3)), T)
    cfg = LossConfig(lambda_tv=5.0)
    loss = lambda: total_loss(P, softmax(logits), cfg, det)[0]
    k = np.arange(1, T + 1)
    sig = lambda: (np.sign(np.diff(softmax(logits) @ k, axis=0)).tobytes(),
                   np.sign(np.diff(softmax(logits) @ k, axis=1)).tobytes())
    _, g = total_loss(P, softmax(logits), cfg, det)
    rep = grad_check(loss, {"z": logits}, {"z": g}, h=1e-5, tolerance=1e-5, signature=sig)
    assert rep.passed, str(rep)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(-1.0)
    with pytest.raises(ValueError):
        LossConfig(1e-6, kind="mse")


def test_rmse_examples_and_oracle():
    Z = np.ones((2, 2))
    assert rmse(Z, Z) == 0
    assert rmse(Z, np.array([[1, 1], [1, 3.0]])) == 1.0
    rng = np.random.default_rng(0)
    for _ in range(5):
        A, B = rng.uniform(0.5, 5, size=(16, 16)), rng.uniform(0.5, 5, size=(16, 16))
        assert rmse(A, B) == rmse_ref(A, B)
        assert rmse(A, A + 2 * (B - A)) == pytest.approx(2 * rmse(A, B), rel=1e-12)
    with pytest.raises(ValueError):
        rmse(Z, np.ones((2, 3)))


def test_accuracy_examples_and_oracle():
    Z = np.full((4, 4), 2.0)
    assert accuracy_delta(Z, Z, 1.01) == 1.0
    assert accuracy_delta(Z, 1.005 * Z, 1.01) == 1.0
    half = Z.copy()
    half[:2] *= 1.02
    assert accuracy_delta(Z, half, 1.01) == 0.5
    rng = np.random.default_rng(0)
    for d in (1.01, 1.02, 1.03, 1.25):
        A = rng.uniform(0.5, 5, size=(16, 16))
        B = A * rng.uniform(0.97, 1.03, size=(16, 16))
        assert accuracy_delta(A, B, d) == acc_ref(A, B, d)
    with pytest.raises(ValueError):
        accuracy_delta(Z, np.zeros_like(Z), 1.01)


def test_avg_variance_examples_and_oracle():
    assert avg_variance(LabelCube(np.array([[0, 3]]), 4).P) == 0.0
    assert avg_variance(np.full((2, 2, 4), 0.25)) == pytest.approx((4 ** 2 - 1) / 12)
    rng = np.random.default_rng(0)
    p = softmax(rng.normal(size=(16, 16, 6)))
    assert avg_variance(p) == var_ref(p)
    onehot = LabelCube(np.full((1, 1), 2), 8).P
    uni = np.full((1, 1, 8), 1 / 8)
    vs = [avg_variance((1 - a) * onehot + a * uni) for a in np.linspace(0, 1, 21)]
    assert np.all(np.diff(vs) > 0)
    assert np.allclose(mean_bin(uni), 4.5)


def test_report_and_csv():
    Z = np.full((2, 2), 2.0)
    m = evaluate(Z, Z * 1.015, np.full((2, 2, 4), 0.25))
    assert list(m) == ["rmse", "acc_1.01", "acc_1.02", "acc_1.03", "avg_var"]
    assert csv_header() == "rmse,acc_1.01,acc_1.02,acc_1.03,avg_var"
    assert csv_row(m).split(",")[1:4] == ["0", "1", "1"]
    assert "avg_var = 1.25" in format_report(m)
    assert math.isnan(evaluate(Z, Z)["avg_var"])
