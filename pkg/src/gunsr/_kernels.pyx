# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for convolution patch gathering and separable resampling.

Every routine writes into a caller-owned output buffer and visits elements
in a fixed order, so results do not depend on how the caller batches work.
"""
import numpy as np

ctypedef fused real:
    float
    double


def im2col(const real[:, :, :, ::1] x, int k, real[:, :, ::1] out):
    """Gather zero-padded k x k neighbourhoods into out[n, c*k*k, h*w]."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ci, di, dj, y, xx, sy, x0, x1, shift
    cdef int p = k // 2
    cdef const real* src
    cdef real* dst
    for b in range(n):
        for ci in range(c):
            for di in range(k):
                for dj in range(k):
                    dst = &out[b, (ci * k + di) * k + dj, 0]
                    shift = dj - p
                    # valid output columns: 0 <= xx + shift < w
                    x0 = -shift if shift < 0 else 0
                    x1 = w - shift if shift > 0 else w
                    for y in range(h):
                        sy = y + di - p
                        if sy < 0 or sy >= h:
                            for xx in range(w):
                                dst[xx] = 0
                        else:
                            src = &x[b, ci, sy, 0]
                            for xx in range(x0):
                                dst[xx] = 0
                            for xx in range(x0, x1):
                                dst[xx] = src[xx + shift]
                            for xx in range(x1, w):
                                dst[xx] = 0
                        dst += w


def col2im(const real[:, :, ::1] cols, int k, real[:, :, :, ::1] out):
    """Scatter-add columns back onto out[n, c, h, w]; out must be zeroed."""
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t b, ci, di, dj, y, xx, sy, x0, x1, shift
    cdef int p = k // 2
    cdef const real* src
    cdef real* dst
    for b in range(n):
        for ci in range(c):
            for di in range(k):
                for dj in range(k):
                    src = &cols[b, (ci * k + di) * k + dj, 0]
                    shift = dj - p
                    x0 = -shift if shift < 0 else 0
                    x1 = w - shift if shift > 0 else w
                    for y in range(h):
                        sy = y + di - p
                        if 0 <= sy < h:
                            dst = &out[b, ci, sy, 0]
                            for xx in range(x0, x1):
                                dst[xx + shift] += src[xx]
                        src += w


def resample_last(const real[:, :, ::1] x, const Py_ssize_t[:, ::1] idx,
                  const double[:, ::1] wts, real[:, :, ::1] out):
    """out[b, r, d] = sum_t wts[d, t] * x[b, r, idx[d, t]]."""
    cdef Py_ssize_t nb = x.shape[0], nr = x.shape[1], nd = idx.shape[0], nt = idx.shape[1]
    cdef Py_ssize_t ns = x.shape[2], rows = nb * nr
    cdef Py_ssize_t i, d, t
    cdef const real* src
    cdef real* dst
    cdef real acc
    cdef const real[:, ::1] w = np.asarray(wts, dtype=np.asarray(out).dtype)
    for i in range(rows):
        src = &x[0, 0, 0] + i * ns
        dst = &out[0, 0, 0] + i * nd
        for d in range(nd):
            acc = 0
            for t in range(nt):
                acc = acc + w[d, t] * src[idx[d, t]]
            dst[d] = acc


def resample_last_adjoint(const real[:, :, ::1] g, const Py_ssize_t[:, ::1] idx,
                          const double[:, ::1] wts, real[:, :, ::1] out):
    """Transpose of resample_last."""
    cdef Py_ssize_t nb = g.shape[0], nr = g.shape[1], nd = idx.shape[0], nt = idx.shape[1]
    cdef Py_ssize_t ns = out.shape[2], rows = nb * nr
    cdef Py_ssize_t i, d, t, s
    cdef const real* src
    cdef real* dst
    cdef real gv
    cdef const real[:, ::1] w = np.asarray(wts, dtype=np.asarray(out).dtype)
    for i in range(rows):
        src = &g[0, 0, 0] + i * nd
        dst = &out[0, 0, 0] + i * ns
        for s in range(ns):
            dst[s] = 0
        for d in range(nd):
            gv = src[d]
            for t in range(nt):
                dst[idx[d, t]] += w[d, t] * gv


def resample_mid(const real[:, :, ::1] x, const Py_ssize_t[:, ::1] idx,
                 const double[:, ::1] wts, real[:, :, ::1] out):
    """out[b, d, col] = sum_t wts[d, t] * x[b, idx[d, t], col]."""
    cdef Py_ssize_t nb = x.shape[0], ns = x.shape[1], ncol = x.shape[2]
    cdef Py_ssize_t nd = idx.shape[0], nt = idx.shape[1]
    cdef Py_ssize_t b, d, t, col
    cdef const real* src
    cdef real* dst
    cdef real wt
    cdef const real[:, ::1] w = np.asarray(wts, dtype=np.asarray(out).dtype)
    for b in range(nb):
        for d in range(nd):
            dst = &out[b, d, 0]
            for col in range(ncol):
                dst[col] = 0
            for t in range(nt):
                src = &x[b, idx[d, t], 0]
                wt = w[d, t]
                for col in range(ncol):
                    dst[col] += wt * src[col]


def resample_mid_adjoint(const real[:, :, ::1] g, const Py_ssize_t[:, ::1] idx,
                         const double[:, ::1] wts, real[:, :, ::1] out):
    """Transpose of resample_mid."""
    cdef Py_ssize_t nb = g.shape[0], ncol = g.shape[2], nd = idx.shape[0], nt = idx.shape[1]
    cdef Py_ssize_t ns = out.shape[1]
    cdef Py_ssize_t b, d, t, col, s
    cdef const real* src
    cdef real* dst
    cdef real wt
    cdef const real[:, ::1] w = np.asarray(wts, dtype=np.asarray(out).dtype)
    for b in range(nb):
        for s in range(ns):
            dst = &out[b, s, 0]
            for col in range(ncol):
                dst[col] = 0
        for d in range(nd):
            src = &g[b, d, 0]
            for t in range(nt):
                dst = &out[b, idx[d, t], 0]
                wt = w[d, t]
                for col in range(ncol):
                    dst[col] += wt * src[col]
