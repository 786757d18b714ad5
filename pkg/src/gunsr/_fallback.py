"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures match the compiled module exactly: each function fills a
caller-owned ``out`` buffer. The resampling routines build a dense operator
from the tap table and hand the contraction to BLAS.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k, out):
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n, c, h, w, k, k
    out.reshape(n, c, k, k, h, w)[...] = win.transpose(0, 1, 4, 5, 2, 3)


def col2im(cols, k, out):
    n, c, h, w = out.shape
    p = k // 2
    padded = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=out.dtype)
    view = cols.reshape(n, c, k, k, h, w)
    for di in range(k):
        for dj in range(k):
            padded[:, :, di:di + h, dj:dj + w] += view[:, :, di, dj]
    out += padded[:, :, p:p + h, p:p + w]


def _dense(idx, wts, n_src):
    m = np.zeros((idx.shape[0], n_src))
    rows = np.repeat(np.arange(idx.shape[0]), idx.shape[1])
    np.add.at(m, (rows, idx.ravel()), wts.ravel())
    return m


def resample_last(x, idx, wts, out):
    m = _dense(idx, wts, x.shape[2]).astype(x.dtype)
    np.matmul(x, m.T, out=out)


def resample_last_adjoint(g, idx, wts, out):
    m = _dense(idx, wts, out.shape[2]).astype(g.dtype)
    np.matmul(g, m, out=out)


def resample_mid(x, idx, wts, out):
    m = _dense(idx, wts, x.shape[1]).astype(x.dtype)
    np.matmul(m, x, out=out)


def resample_mid_adjoint(g, idx, wts, out):
    m = _dense(idx, wts, out.shape[1]).astype(g.dtype)
    np.matmul(m.T, g, out=out)
