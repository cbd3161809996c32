"""Forward and backward kernels for the layers of the toy network.

Volumes are ``(B, C, T, H, W)`` float64 arrays.  Convolutions are
cross-correlations lowered to a single matrix product through an explicit
patch matrix; the transposed convolution is the exact adjoint of that map.
"""
from __future__ import annotations

import numpy as np

from .. import kernels


def conv_out_len(n, k, s, p, d):
    return (n + 2 * p - d * (k - 1) - 1) // s + 1


def conv_transpose_out_len(n, k, s, p, d):
    return (n - 1) * s - 2 * p + d * (k - 1) + 1


def _pad(x, padding):
    if not any(padding):
        return x
    pt, ph, pw = padding
    return np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))


def _crop(x, padding):
    pt, ph, pw = padding
    T, H, W = x.shape[2:]
    return x[:, :, pt:T - pt, ph:H - ph, pw:W - pw]


def conv3d_forward(x, W, b, stride=(1, 1, 1), padding=(0, 0, 0), dilation=(1, 1, 1)):
    """Strided, padded, dilated 3-D cross-correlation.

    ``W`` is ``(C_out, C_in, kt, kh, kw)``.  Returns ``(y, cache)``.
    """
    B, Cin, T, H, Wd = x.shape
    Cout, Cin_w, kt, kh, kw = W.shape
    if Cin != Cin_w:
        raise ValueError(f"input has {Cin} channels, kernel expects {Cin_w}")
    out_shape = tuple(
        conv_out_len(n, k, s, p, d)
        for n, k, s, p, d in zip((T, H, Wd), (kt, kh, kw), stride, padding, dilation)
    )
    if min(out_shape) < 1:
        raise ValueError(f"convolution output would be empty for input {x.shape}")
    xp = _pad(x, padding)
    cols = kernels.im2col3d(xp, (kt, kh, kw), stride, dilation, out_shape)
    y = W.reshape(Cout, -1) @ cols
    if b is not None:
        y += b[:, None]
    y = y.reshape((Cout, B) + out_shape).transpose(1, 0, 2, 3, 4)
    cache = (cols, xp.shape, W, stride, padding, dilation, out_shape)
    return np.ascontiguousarray(y), cache


def conv3d_backward(cache, dy):
    """Returns ``(dx, dW, db)``."""
    cols, xp_shape, W, stride, padding, dilation, out_shape = cache
    Cout = W.shape[0]
    B = xp_shape[0]
    dy2 = dy.transpose(1, 0, 2, 3, 4).reshape(Cout, -1)
    dW = (dy2 @ cols.T).reshape(W.shape)
    db = dy2.sum(axis=1)
    dcols = W.reshape(Cout, -1).T @ dy2
    dxp = kernels.col2im3d(dcols, xp_shape, W.shape[2:], stride, dilation, out_shape)
    return _crop(dxp, padding), dW, db


def conv_transpose3d_forward(x, W, b, stride=(1, 1, 1), padding=(0, 0, 0), dilation=(1, 1, 1)):
    """Adjoint of :func:`conv3d_forward` (gradient of conv w.r.t. its input).

    ``W`` is ``(C_in, C_out, kt, kh, kw)``; the output length along each axis
    is ``(n - 1) * s - 2 * p + d * (k - 1) + 1``.
    """
    B, Cin, T, H, Wd = x.shape
    Cin_w, Cout, kt, kh, kw = W.shape
    if Cin != Cin_w:
        raise ValueError(f"input has {Cin} channels, kernel expects {Cin_w}")
    in_shape = (T, H, Wd)
    out_shape = tuple(
        conv_transpose_out_len(n, k, s, p, d)
        for n, k, s, p, d in zip(in_shape, (kt, kh, kw), stride, padding, dilation)
    )
    if min(out_shape) < 1:
        raise ValueError(f"transposed convolution output would be empty for input {x.shape}")
    x2 = x.transpose(1, 0, 2, 3, 4).reshape(Cin, -1)
    cols = W.reshape(Cin, -1).T @ x2
    padded = (B, Cout) + tuple(o + 2 * p for o, p in zip(out_shape, padding))
    y = _crop(kernels.col2im3d(cols, padded, (kt, kh, kw), stride, dilation, in_shape), padding)
    if b is not None:
        y = y + b[None, :, None, None, None]
    cache = (x2, W, stride, padding, dilation, in_shape, B)
    return np.ascontiguousarray(y), cache


def conv_transpose3d_backward(cache, dy):
    x2, W, stride, padding, dilation, in_shape, B = cache
    Cin, Cout = W.shape[:2]
    dyp = _pad(dy, padding)
    dcols = kernels.im2col3d(dyp, W.shape[2:], stride, dilation, in_shape)
    dW = (x2 @ dcols.T).reshape(W.shape)
    dx = (W.reshape(Cin, -1) @ dcols).reshape((Cin, B) + in_shape).transpose(1, 0, 2, 3, 4)
    db = dy.sum(axis=(0, 2, 3, 4))
    return np.ascontiguousarray(dx), dW, db


def pointwise_forward(x, W, b):
    """1x1 convolution over axis 1 of an array of any rank; ``W`` is ``(C_out, C_in)``."""
    y = np.moveaxis(np.tensordot(W, x, axes=([1], [1])), 0, 1)
    if b is not None:
        y = y + b.reshape((1, -1) + (1,) * (x.ndim - 2))
    return np.ascontiguousarray(y), (x, W)


def pointwise_backward(cache, dy):
    x, W = cache
    axes = [0] + list(range(2, x.ndim))
    dW = np.tensordot(dy, x, axes=(axes, axes))
    db = dy.sum(axis=tuple(axes))
    dx = np.moveaxis(np.tensordot(W, dy, axes=([0], [1])), 0, 1)
    return np.ascontiguousarray(dx), dW, db


BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train=True):
    """Per-channel (axis 1) normalization.

    In training mode returns the batch statistics' running-average update as
    part of the cache: ``cache[-1] = (new_mean, new_var)``.
    """
    axes = (0,) + tuple(range(2, x.ndim))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    if train:
        n = x.size // x.shape[1]
        if n < 2:
            raise ValueError("batch normalization needs at least 2 values per channel in training mode")
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        update = (
            BN_MOMENTUM * running_mean + (1 - BN_MOMENTUM) * mu,
            BN_MOMENTUM * running_var + (1 - BN_MOMENTUM) * var * n / (n - 1),
        )
    else:
        mu, var, update = running_mean, running_var, None
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu.reshape(shape)) * inv.reshape(shape)
    y = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return y, (xhat, inv, gamma, train, axes, shape, update)


def batchnorm_backward(cache, dy):
    """Returns ``(dx, dgamma, dbeta)``."""
    xhat, inv, gamma, train, axes, shape, _ = cache
    dbeta = dy.sum(axis=axes)
    dgamma = (dy * xhat).sum(axis=axes)
    dxhat = dy * gamma.reshape(shape)
    if not train:
        return dxhat * inv.reshape(shape), dgamma, dbeta
    n = dy.size // dy.shape[1]
    dx = (inv.reshape(shape) / n) * (
        n * dxhat
        - dxhat.sum(axis=axes).reshape(shape)
        - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape)
    )
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(mask, dy):
    return dy * mask


def sigmoid_forward(x):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y


def sigmoid_backward(y, dy):
    return dy * y * (1.0 - y)
