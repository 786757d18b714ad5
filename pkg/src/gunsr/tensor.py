"""Dense convolution / activation math with hand-written backward passes.

Tensors are C-contiguous numpy arrays laid out ``[n, c, h, w]``. Single
precision is used for training and inference, double precision for gradient
checks; every routine preserves the dtype it is given.
"""
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import _backend


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


@dataclass
class ConvParams:
    weight: np.ndarray  # [c_out, c_in, k, k]
    bias: np.ndarray    # [c_out]

    @property
    def c_out(self):
        return self.weight.shape[0]

    @property
    def c_in(self):
        return self.weight.shape[1]

    @property
    def k(self):
        return self.weight.shape[2]


# Stack of active multiply-accumulate tallies; see ``count_macs``.
_mac_tallies = []


@contextmanager
def count_macs():
    """Record the multiply-accumulates of every conv2d_forward in the block.

    Yields a list that receives one ``(c_in, c_out, k, h, w, macs)`` tuple per
    convolution, where ``macs`` is summed over the batch.
    """
    tally = []
    _mac_tallies.append(tally)
    try:
        yield tally
    finally:
        _mac_tallies.remove(tally)


def _check_4d(name, t):
    if not isinstance(t, np.ndarray) or t.ndim != 4:
        raise ShapeError(f"{name} must be a 4-D [n, c, h, w] array, got "
                         f"{getattr(t, 'shape', type(t))}")


def _im2col(x, k):
    n, c, h, w = x.shape
    x = np.ascontiguousarray(x)
    if k == 1:
        return x.reshape(n, c, h * w)
    cols = np.empty((n, c * k * k, h * w), dtype=x.dtype)
    _backend.im2col(x, k, cols)
    return cols


# element count above which the forward pass avoids materialising im2col
_COLS_LIMIT = 1 << 25


def _conv_shifted(x, w):
    """Accumulate one matmul per kernel tap; memory stays O(c_in * h * w)."""
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, c_out, h * wd), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            shifted = np.ascontiguousarray(xp[:, :, di:di + h, dj:dj + wd]).reshape(n, c_in, h * wd)
            out += np.matmul(w[:, :, di, dj], shifted)
    return out


def conv2d_forward(x, params, zero_pad=None, cols=None):
    """Zero-padded, stride-1 cross-correlation plus bias.

    ``zero_pad`` must equal ``k // 2`` so the spatial size is preserved; pass
    ``None`` to use that value. ``cols`` may carry a precomputed patch matrix.
    """
    _check_4d("input", x)
    w = params.weight
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"weights must be [c_out, c_in, k, k], got {w.shape}")
    k = w.shape[2]
    if zero_pad is None:
        zero_pad = k // 2
    if zero_pad != k // 2:
        raise ShapeError(f"zero_pad={zero_pad} does not preserve size for k={k}")
    if x.shape[1] != params.c_in:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {params.c_in}")
    if params.bias.shape != (params.c_out,):
        raise ShapeError(f"bias shape {params.bias.shape} != ({params.c_out},)")
    n, _, h, wd = x.shape
    if cols is None and n * params.c_in * k * k * h * wd > _COLS_LIMIT:
        out = _conv_shifted(x, w)
    else:
        if cols is None:
            cols = _im2col(x, k)
        out = np.matmul(w.reshape(params.c_out, -1), cols)
    out += params.bias[None, :, None]
    for tally in _mac_tallies:
        tally.append((params.c_in, params.c_out, k, h, wd,
                      n * params.c_in * k * k * params.c_out * h * wd))
    return out.reshape(n, params.c_out, h, wd)


def conv2d_backward(x, params, grad_out, cols=None):
    """Exact adjoint of conv2d_forward.

    Returns ``(grad_input, grad_weight, grad_bias)``.
    """
    _check_4d("input", x)
    _check_4d("grad_out", grad_out)
    n, c_in, h, w = x.shape
    k = params.k
    if c_in != params.c_in:
        raise ShapeError(f"input has {c_in} channels, weights expect {params.c_in}")
    if grad_out.shape != (n, params.c_out, h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward "
                         f"output {(n, params.c_out, h, w)}")
    if cols is None:
        cols = _im2col(x, k)
    g = np.ascontiguousarray(grad_out).reshape(n, params.c_out, h * w)
    grad_bias = g.sum(axis=(0, 2))
    grad_weight = np.tensordot(g, cols, axes=([0, 2], [0, 2])).reshape(params.weight.shape)
    gcols = np.matmul(params.weight.reshape(params.c_out, -1).T, g)
    if k == 1:
        grad_input = gcols.reshape(n, c_in, h, w)
    else:
        grad_input = np.zeros((n, c_in, h, w), dtype=x.dtype)
        _backend.col2im(gcols, k, grad_input)
    return grad_input, grad_weight.astype(x.dtype, copy=False), grad_bias.astype(x.dtype, copy=False)


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    # subgradient 0 at exactly 0
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def he_init(shape, rng_seed, dtype=np.float32):
    """Zero-mean Gaussian weights with variance 2 / (c_in * k * k).

    ``rng_seed`` is an int seed or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(rng_seed)
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def init_conv(c_out, c_in, k, rng_seed, dtype=np.float32):
    """He-initialised ConvParams with a zero bias."""
    return ConvParams(he_init((c_out, c_in, k, k), rng_seed, dtype),
                      np.zeros(c_out, dtype=dtype))
