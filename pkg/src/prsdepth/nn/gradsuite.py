"""Finite-difference checks for every differentiable piece of the pipeline.

Each check builds small random inputs, contracts the output with a fixed
random tensor to get a scalar loss, and compares analytic gradients with
central differences.  Maps that are linear in each perturbed coordinate use a
large step, since only roundoff limits them.  Piecewise-linear branches (ReLU, shrinkage, TV signs)
are tracked so coordinates within ``h`` of a kink are skipped.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..core import DetectorConfig
from ..loss_metrics import LabelCube, LossConfig, ce_loss, softmax, total_loss
from . import functional as F
from .gradcheck import GradCheckReport, grad_check
from .model import PrsNet, PrsNetConfig

TOLERANCES = {
    "soft_threshold": 1e-7,
    "conv3d": 1e-7,
    "conv_transpose3d": 1e-7,
    "batchnorm": 1e-6,
    "ce": 1e-6,
    "tv_soft_argmax": 1e-6,
    "prsnet": 1e-4,
}


def check_soft_threshold(seed=0) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 20))
    tau = rng.uniform(0.2, 0.8, size=12)
    R = rng.normal(size=x.shape)
    loss = lambda: float((kernels.soft_threshold(x, tau) * R).sum())
    sig = lambda: (np.abs(x) > tau[:, None]).tobytes()
    dx, dtau = kernels.soft_threshold_grad(x, tau, R)
    return grad_check(loss, {"x": x, "tau": tau}, {"x": dx, "tau": dtau}, h=1e-3,
                      tolerance=TOLERANCES["soft_threshold"], seed=seed, signature=sig)


def check_conv3d(seed=0) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 3, 9, 5, 4))
    W = rng.normal(size=(4, 3, 3, 3, 3))
    b = rng.normal(size=4)
    args = dict(stride=(2, 1, 1), padding=(2, 1, 1), dilation=(2, 1, 1))
    y, cache = F.conv3d_forward(x, W, b, **args)
    R = rng.normal(size=y.shape)
    loss = lambda: float((F.conv3d_forward(x, W, b, **args)[0] * R).sum())
    dx, dW, db = F.conv3d_backward(cache, R)
    return grad_check(loss, {"x": x, "W": W, "b": b}, {"x": dx, "W": dW, "b": db}, h=1e-3,
                      tolerance=TOLERANCES["conv3d"], seed=seed)


def check_conv_transpose3d(seed=0) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 4, 4, 3, 3))
    W = rng.normal(size=(4, 2, 6, 3, 3))
    b = rng.normal(size=2)
    args = dict(stride=(2, 1, 1), padding=(2, 1, 1))
    y, cache = F.conv_transpose3d_forward(x, W, b, **args)
    R = rng.normal(size=y.shape)
    loss = lambda: float((F.conv_transpose3d_forward(x, W, b, **args)[0] * R).sum())
    dx, dW, db = F.conv_transpose3d_backward(cache, R)
    return grad_check(loss, {"x": x, "W": W, "b": b}, {"x": dx, "W": dW, "b": db}, h=1e-3,
                      tolerance=TOLERANCES["conv_transpose3d"], seed=seed)


def check_batchnorm(seed=0) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    x = rng.normal(2.0, 3.0, size=(3, 5, 4, 4))
    gamma = rng.uniform(0.5, 1.5, size=5)
    beta = rng.normal(size=5)
    rm, rv = np.zeros(5), np.ones(5)
    y, cache = F.batchnorm_forward(x, gamma, beta, rm, rv, train=True)
    R = rng.normal(size=y.shape)
    loss = lambda: float((F.batchnorm_forward(x, gamma, beta, rm, rv, train=True)[0] * R).sum())
    dx, dg, db = F.batchnorm_backward(cache, R)
    return grad_check(loss, {"x": x, "gamma": gamma, "beta": beta}, {"x": dx, "gamma": dg, "beta": db},
                      h=1e-5, tolerance=TOLERANCES["batchnorm"], seed=seed)


def check_ce(seed=0) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    T = 16
    logits = rng.normal(size=(2, 3, 3, T))
    P = LabelCube(rng.integers(0, T, size=(2, 3, 3)), T).P
    loss = lambda: ce_loss(P, softmax(logits))[0]
    _, g = ce_loss(P, softmax(logits))
    return grad_check(loss, {"logits": logits}, {"logits": g}, h=1e-5,
                      tolerance=TOLERANCES["ce"], seed=seed)


def check_tv_soft_argmax(seed=0) -> GradCheckReport:
    """TV of the soft-argmax depth, differentiated through the softmax."""
    rng = np.random.default_rng(seed)
    T = 16
    det = DetectorConfig(T=T)
    logits = rng.normal(scale=2.0, size=(2, 4, 4, T))
    zeros = np.zeros_like(logits)
    cfg = LossConfig(lambda_tv=1.0)
    k = np.arange(1, T + 1)

    def loss():
        return total_loss(zeros, softmax(logits), cfg, det)[0]

    def sig():
        z = softmax(logits) @ k
        return (np.sign(np.diff(z, axis=-1)).tobytes(), np.sign(np.diff(z, axis=-2)).tobytes())

    # With an all-zero target the CE term is identically 0 in value, so the
    # loss is pure TV; drop the CE part of the gradient to match.
    p = softmax(logits)
    g = total_loss(zeros, p, cfg, det)[1] - ce_loss(zeros, p)[1]
    return grad_check(loss, {"logits": logits}, {"logits": g}, h=1e-5,
                      tolerance=TOLERANCES["tv_soft_argmax"], seed=seed, signature=sig)


def check_prsnet(seed=0) -> GradCheckReport:
    """Whole toy network in training mode, CE + TV loss, all weights."""
    rng = np.random.default_rng(seed)
    T = 16
    det = DetectorConfig(T=T)
    cfg = PrsNetConfig(T_in=T, window=3, encoder_stages=1, base_channels=2, num_prs_blocks=1)
    net = PrsNet(cfg)
    params = net.init_params(seed + 1)
    x = rng.poisson(1.0, size=(2, 4, 4, T)).astype(np.float64)
    y = LabelCube(rng.integers(0, T, size=(2, 4, 4)), T)
    lc = LossConfig(lambda_tv=0.1)

    def loss():
        logits, _ = net.forward(params, x, train=True, update_buffers=False)
        return total_loss(y, softmax(logits), lc, det)[0]

    def sig():
        kinks = []
        net.forward(params, x, train=True, kinks=kinks, update_buffers=False)
        return tuple(a.tobytes() for a in kinks)

    logits, cache = net.forward(params, x, train=True, update_buffers=False)
    _, dl = total_loss(y, softmax(logits), lc, det)
    grads = net.backward(params, cache, dl)
    return grad_check(loss, params.weights, grads, h=1e-5, tolerance=TOLERANCES["prsnet"],
                      n_coords=300, seed=seed, signature=sig)


CHECKS = {
    "soft_threshold": check_soft_threshold,
    "conv3d": check_conv3d,
    "conv_transpose3d": check_conv_transpose3d,
    "batchnorm": check_batchnorm,
    "ce": check_ce,
    "tv_soft_argmax": check_tv_soft_argmax,
    "prsnet": check_prsnet,
}


def run_all(seed=0, names=None) -> dict:
    return {n: CHECKS[n](seed) for n in (names or CHECKS)}
