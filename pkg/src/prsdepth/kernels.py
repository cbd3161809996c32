"""Backend selection for the per-pixel kernels.

The compiled extension is used when it was built; otherwise, or when
``PRSDEPTH_PURE_PYTHON=1`` is set, the NumPy fallback is used.  Callers pass
arbitrary arrays; this module normalizes them to C-contiguous float64
``(P, T)`` views before dispatch.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("PRSDEPTH_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"


def _as2d(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, np.shape(x)[-1]))


def window_sum(x, width, impl=None):
    """Zero-padded moving sum of odd length ``width`` along the last axis."""
    impl = impl or _impl
    x = np.asarray(x)
    return impl.window_sum(_as2d(x), int(width)).reshape(x.shape)


def soft_threshold(x, tau, impl=None):
    """Soft shrinkage along the last axis with one threshold per leading index."""
    impl = impl or _impl
    x = np.asarray(x)
    tau = np.ascontiguousarray(np.broadcast_to(tau, x.shape[:-1]), dtype=np.float64).reshape(-1)
    return impl.soft_threshold(_as2d(x), tau).reshape(x.shape)


def soft_threshold_grad(x, tau, upstream, impl=None):
    impl = impl or _impl
    x = np.asarray(x)
    tau = np.ascontiguousarray(np.broadcast_to(tau, x.shape[:-1]), dtype=np.float64).reshape(-1)
    dx, dtau = impl.soft_threshold_grad(_as2d(x), tau, _as2d(upstream))
    return dx.reshape(x.shape), dtau.reshape(x.shape[:-1])


def first_argmax(x, impl=None):
    """Index of the maximum along the last axis, ties to the lowest index."""
    impl = impl or _impl
    x = np.asarray(x)
    return impl.first_argmax(_as2d(x)).reshape(x.shape[:-1])


def matched_filter_argmax(h, template, lo, impl=None):
    impl = impl or _impl
    h = np.asarray(h)
    template = np.ascontiguousarray(template, dtype=np.float64)
    return impl.matched_filter_argmax(_as2d(h), template, int(lo)).reshape(h.shape[:-1])


def pixel_moments(p, impl=None):
    """1-based mean bin and variance of each distribution along the last axis.

    Sums run sequentially over bins, so results are reproducible bit for bit
    against a plain loop.
    """
    impl = impl or _impl
    p = np.asarray(p)
    m, v = impl.pixel_moments(_as2d(p))
    return m.reshape(p.shape[:-1]), v.reshape(p.shape[:-1])


def im2col3d(xp, kernel, stride, dilation, out_shape, impl=None):
    """Patch matrix ``(C*kt*kh*kw, B*To*Ho*Wo)`` of a padded ``(B, C, T, H, W)`` volume."""
    impl = impl or _impl
    return impl.im2col3d(np.ascontiguousarray(xp), tuple(kernel), tuple(stride), tuple(dilation),
                         tuple(out_shape))


def col2im3d(cols, padded_shape, kernel, stride, dilation, out_shape, impl=None):
    """Adjoint of :func:`im2col3d`: scatter-add patches onto a zero volume."""
    impl = impl or _impl
    return impl.col2im3d(np.ascontiguousarray(cols), tuple(padded_shape), tuple(kernel),
                         tuple(stride), tuple(dilation), tuple(out_shape))
