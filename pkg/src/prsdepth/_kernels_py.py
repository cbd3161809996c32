"""Pure NumPy implementations of the per-pixel hot loops.

Every function takes pixel-major 2-D arrays ``(P, T)`` of float64 and mirrors
the compiled versions in ``_kernels.pyx`` operation for operation, so the two
backends agree bit for bit except where noted.
"""
import numpy as np


def window_sum(x, width):
    P, T = x.shape
    u = width // 2
    out = np.zeros((P, T), dtype=np.float64)
    for ell in range(-u, u + 1):
        if ell < 0:
            out[:, -ell:] += x[:, : T + ell]
        elif ell > 0:
            out[:, : T - ell] += x[:, ell:]
        else:
            out += x
    return out


def soft_threshold(x, tau):
    t = tau[:, None]
    return np.where(x > t, x - t, np.where(x < -t, x + t, 0.0))


def soft_threshold_grad(x, tau, upstream):
    """Return ``(d/dx, d/dtau)``; ``d/dtau`` is summed over the time axis.

    The time-axis reduction uses NumPy's pairwise summation, so ``d/dtau`` may
    differ from the compiled backend in the last few ulps.
    """
    t = tau[:, None]
    live = np.abs(x) > t
    dx = np.where(live, upstream, 0.0)
    dtau = -(np.where(live, np.sign(x), 0.0) * upstream).sum(axis=1)
    return dx, dtau


def first_argmax(x):
    return np.argmax(x, axis=1).astype(np.int64)


def matched_filter_argmax(h, template, lo):
    """Best shift ``d`` maximizing ``sum_m h[d + lo + m] * template[m]``.

    Template taps falling outside ``[0, T)`` are dropped; ties go to the
    lowest shift.
    """
    P, T = h.shape
    L = template.shape[0]
    scores = np.zeros((P, T), dtype=np.float64)
    for m in range(L):
        off = lo + m
        w = template[m]
        if off >= 0:
            if off < T:
                scores[:, : T - off] += h[:, off:] * w
        elif -off < T:
            scores[:, -off:] += h[:, : T + off] * w
    return np.argmax(scores, axis=1).astype(np.int64)


def pixel_moments(p):
    """Per-row 1-based mean bin and variance, accumulated left to right."""
    P, T = p.shape
    m = np.zeros(P, dtype=np.float64)
    for k in range(T):
        m = m + (k + 1) * p[:, k]
    v = np.zeros(P, dtype=np.float64)
    for k in range(T):
        d = (k + 1) - m
        v = v + p[:, k] * (d * d)
    return m, v


def _window_slice(a, d, s, n):
    return slice(a * d, a * d + s * (n - 1) + 1, s)


def im2col3d(xp, kernel, stride, dilation, out_shape):
    """Patch matrix ``(C*kt*kh*kw, B*To*Ho*Wo)`` of a padded volume."""
    B, C = xp.shape[:2]
    kt, kh, kw = kernel
    To, Ho, Wo = out_shape
    cols = np.empty((C, kt, kh, kw, B, To, Ho, Wo), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3, 4)
    for a in range(kt):
        st = _window_slice(a, dilation[0], stride[0], To)
        for b in range(kh):
            sh = _window_slice(b, dilation[1], stride[1], Ho)
            for c in range(kw):
                sw = _window_slice(c, dilation[2], stride[2], Wo)
                cols[:, a, b, c] = xt[:, :, st, sh, sw]
    return cols.reshape(C * kt * kh * kw, B * To * Ho * Wo)


def col2im3d(cols, padded_shape, kernel, stride, dilation, out_shape):
    """Scatter-add a patch matrix onto a zero volume of ``padded_shape``."""
    B, C = padded_shape[:2]
    kt, kh, kw = kernel
    To, Ho, Wo = out_shape
    cols = cols.reshape(C, kt, kh, kw, B, To, Ho, Wo)
    xt = np.zeros((C, B) + tuple(padded_shape[2:]), dtype=cols.dtype)
    for a in range(kt):
        st = _window_slice(a, dilation[0], stride[0], To)
        for b in range(kh):
            sh = _window_slice(b, dilation[1], stride[1], Ho)
            for c in range(kw):
                sw = _window_slice(c, dilation[2], stride[2], Wo)
                xt[:, :, st, sh, sw] += cols[:, a, b, c]
    return np.ascontiguousarray(xt.transpose(1, 0, 2, 3, 4))
