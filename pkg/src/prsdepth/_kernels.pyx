# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels. See ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def window_sum(const double[:, ::1] x, Py_ssize_t width):
    cdef Py_ssize_t P = x.shape[0], T = x.shape[1], u = width // 2
    cdef Py_ssize_t p, k, ell, idx
    cdef double acc
    out = np.zeros((P, T), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for p in range(P):
            for k in range(T):
                acc = 0.0
                for ell in range(-u, u + 1):
                    idx = k + ell
                    if 0 <= idx < T:
                        acc += x[p, idx]
                o[p, k] = acc
    return out


def soft_threshold(const double[:, ::1] x, const double[::1] tau):
    cdef Py_ssize_t P = x.shape[0], T = x.shape[1], p, k
    cdef double t, v
    out = np.empty((P, T), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for p in range(P):
            t = tau[p]
            for k in range(T):
                v = x[p, k]
                if v > t:
                    o[p, k] = v - t
                elif v < -t:
                    o[p, k] = v + t
                else:
                    o[p, k] = 0.0
    return out


def soft_threshold_grad(const double[:, ::1] x, const double[::1] tau,
                        const double[:, ::1] upstream):
    cdef Py_ssize_t P = x.shape[0], T = x.shape[1], p, k
    cdef double t, v, acc
    dx = np.zeros((P, T), dtype=np.float64)
    dtau = np.zeros(P, dtype=np.float64)
    cdef double[:, ::1] gx = dx
    cdef double[::1] gt = dtau
    with nogil:
        for p in range(P):
            t = tau[p]
            acc = 0.0
            for k in range(T):
                v = x[p, k]
                if v > t:
                    gx[p, k] = upstream[p, k]
                    acc -= upstream[p, k]
                elif v < -t:
                    gx[p, k] = upstream[p, k]
                    acc += upstream[p, k]
            gt[p] = acc
    return dx, dtau


def first_argmax(const double[:, ::1] x):
    cdef Py_ssize_t P = x.shape[0], T = x.shape[1], p, k, best
    cdef double bv
    out = np.zeros(P, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    with nogil:
        for p in range(P):
            best = 0
            bv = x[p, 0]
            for k in range(1, T):
                if x[p, k] > bv:
                    bv = x[p, k]
                    best = k
            o[p] = best
    return out


def matched_filter_argmax(const double[:, ::1] h, const double[::1] template, Py_ssize_t lo):
    cdef Py_ssize_t P = h.shape[0], T = h.shape[1], L = template.shape[0]
    cdef Py_ssize_t p, d, m, idx, best
    cdef double acc, bv
    out = np.zeros(P, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    with nogil:
        for p in range(P):
            best = 0
            bv = 0.0
            for d in range(T):
                acc = 0.0
                for m in range(L):
                    idx = d + lo + m
                    if 0 <= idx < T:
                        acc += h[p, idx] * template[m]
                if d == 0 or acc > bv:
                    bv = acc
                    best = d
            o[p] = best
    return out



ctypedef fused real:
    float
    double


def im2col3d(const real[:, :, :, :, ::1] xp, kernel, stride, dilation, out_shape):
    """Patch matrix ``(C*kt*kh*kw, B*To*Ho*Wo)`` of a padded volume."""
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t Tp = xp.shape[2], Hp = xp.shape[3], Wp = xp.shape[4]
    cdef Py_ssize_t kt = kernel[0], kh = kernel[1], kw = kernel[2]
    cdef Py_ssize_t st = stride[0], sh = stride[1], sw = stride[2]
    cdef Py_ssize_t dt = dilation[0], dh = dilation[1], dw = dilation[2]
    cdef Py_ssize_t To = out_shape[0], Ho = out_shape[1], Wo = out_shape[2]
    dtype = np.float32 if sizeof(real) == 4 else np.float64
    cols = np.empty((C * kt * kh * kw, B * To * Ho * Wo), dtype=dtype)
    if cols.size == 0:
        return cols
    cdef real[:, ::1] o = cols
    cdef real* dst = &o[0, 0]
    cdef const real* src = &xp[0, 0, 0, 0, 0]
    cdef const real* row_src
    cdef Py_ssize_t c, a, bb, cc, n, t, h, w
    with nogil:
        for c in range(C):
            for a in range(kt):
                for bb in range(kh):
                    for cc in range(kw):
                        for n in range(B):
                            for t in range(To):
                                for h in range(Ho):
                                    row_src = src + (((n * C + c) * Tp + a * dt + t * st) * Hp
                                                     + bb * dh + h * sh) * Wp + cc * dw
                                    if sw == 1:
                                        for w in range(Wo):
                                            dst[w] = row_src[w]
                                    else:
                                        for w in range(Wo):
                                            dst[w] = row_src[w * sw]
                                    dst += Wo
    return cols


def col2im3d(const real[:, ::1] cols, padded_shape, kernel, stride, dilation, out_shape):
    """Scatter-add a patch matrix onto a zero volume of ``padded_shape``."""
    cdef Py_ssize_t kt = kernel[0], kh = kernel[1], kw = kernel[2]
    cdef Py_ssize_t st = stride[0], sh = stride[1], sw = stride[2]
    cdef Py_ssize_t dt = dilation[0], dh = dilation[1], dw = dilation[2]
    cdef Py_ssize_t To = out_shape[0], Ho = out_shape[1], Wo = out_shape[2]
    cdef Py_ssize_t B = padded_shape[0], C = padded_shape[1]
    cdef Py_ssize_t Tp = padded_shape[2], Hp = padded_shape[3], Wp = padded_shape[4]
    dtype = np.float32 if sizeof(real) == 4 else np.float64
    xp = np.zeros(tuple(padded_shape), dtype=dtype)
    if cols.size == 0 or xp.size == 0:
        return xp
    cdef real[:, :, :, :, ::1] x = xp
    cdef real* base = &x[0, 0, 0, 0, 0]
    cdef const real* src = &cols[0, 0]
    cdef real* row_dst
    cdef Py_ssize_t c, a, bb, cc, n, t, h, w
    with nogil:
        for c in range(C):
            for a in range(kt):
                for bb in range(kh):
                    for cc in range(kw):
                        for n in range(B):
                            for t in range(To):
                                for h in range(Ho):
                                    row_dst = base + (((n * C + c) * Tp + a * dt + t * st) * Hp
                                                      + bb * dh + h * sh) * Wp + cc * dw
                                    if sw == 1:
                                        for w in range(Wo):
                                            row_dst[w] += src[w]
                                    else:
                                        for w in range(Wo):
                                            row_dst[w * sw] += src[w]
                                    src += Wo
    return xp


def pixel_moments(const double[:, ::1] p):
    """Per-row 1-based mean bin and variance, accumulated left to right."""
    cdef Py_ssize_t P = p.shape[0], T = p.shape[1], r, k
    cdef double m, v, d
    mean = np.empty(P, dtype=np.float64)
    var = np.empty(P, dtype=np.float64)
    cdef double[::1] mo = mean
    cdef double[::1] vo = var
    with nogil:
        for r in range(P):
            m = 0.0
            for k in range(T):
                m = m + (k + 1) * p[r, k]
            v = 0.0
            for k in range(T):
                d = (k + 1) - m
                v = v + p[r, k] * (d * d)
            mo[r] = m
            vo[r] = v
    return mean, var
