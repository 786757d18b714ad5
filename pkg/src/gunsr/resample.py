"""Bicubic resizing as an explicit linear operator, plus its exact transpose.

Coordinates are half-pixel centred (``src = (dst + 0.5) * src_len / dst_len - 0.5``)
and out-of-range taps are clamped to the nearest edge sample. A resize is
separable: one tap table per axis, applied along the width and then along
the height. The transpose walks the same tables in reverse, which is what
backpropagation through an upsampling layer needs.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _backend

KEYS_A = -0.5
TAPS = 4


def keys_kernel(t, a=KEYS_A):
    """Keys cubic convolution kernel; accepts scalars or arrays."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2 = t * t
    t3 = t2 * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    out = np.where(t <= 1, near, np.where(t < 2, far, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AxisPlan:
    """Tap table for one axis: ``out[d] = sum_t wts[d, t] * in[idx[d, t]]``."""

    src: int
    dst: int
    idx: np.ndarray  # [dst, TAPS] intp
    wts: np.ndarray  # [dst, TAPS] float64

    def matrix(self):
        """Dense ``[dst, src]`` operator (used by tests and the fallback)."""
        m = np.zeros((self.dst, self.src))
        for d in range(self.dst):
            for j, w in zip(self.idx[d], self.wts[d]):
                m[d, j] += w
        return m


@lru_cache(maxsize=512)
def axis_plan(src, dst):
    if src < 1 or dst < 1:
        raise ValueError(f"resize axis lengths must be >= 1, got {src} -> {dst}")
    idx = np.zeros((dst, TAPS), dtype=np.intp)
    wts = np.zeros((dst, TAPS), dtype=np.float64)
    scale = src / dst
    for d in range(dst):
        x = (d + 0.5) * scale - 0.5
        base = int(np.floor(x))
        merged = {}
        for j in range(base - 1, base + 3):
            w = keys_kernel(x - j)
            if w == 0.0:
                continue
            jc = min(max(j, 0), src - 1)
            merged[jc] = merged.get(jc, 0.0) + w
        for t, (j, w) in enumerate(sorted(merged.items())):
            idx[d, t] = j
            wts[d, t] = w
    idx.setflags(write=False)
    wts.setflags(write=False)
    return AxisPlan(src, dst, idx, wts)


@dataclass(frozen=True)
class ResamplePlan:
    rows: AxisPlan  # height axis
    cols: AxisPlan  # width axis
    edge: str = "clamp"

    @property
    def src(self):
        return self.rows.src, self.cols.src

    @property
    def dst(self):
        return self.rows.dst, self.cols.dst


def resample_plan(src_h, src_w, dst_h, dst_w):
    return ResamplePlan(axis_plan(src_h, dst_h), axis_plan(src_w, dst_w))


def _as_stack(a):
    a = np.asarray(a)
    if not np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float64)
    if a.ndim < 2:
        raise ValueError(f"expected an image plane or a stack of planes, got shape {a.shape}")
    lead = a.shape[:-2]
    return np.ascontiguousarray(a.reshape((-1,) + a.shape[-2:])), lead


def bicubic_resize(image, dst_h, dst_w):
    """Resize the trailing two axes of ``image`` to ``(dst_h, dst_w)``.

    Leading axes (batch, channel) are carried along. Values are not clipped.
    """
    if dst_h < 1 or dst_w < 1:
        raise ValueError(f"target size must be at least 1x1, got {dst_h}x{dst_w}")
    x, lead = _as_stack(image)
    b, h, w = x.shape
    if (h, w) == (dst_h, dst_w):
        return x.reshape(lead + (h, w)).copy()
    plan = resample_plan(h, w, dst_h, dst_w)
    tmp = np.empty((b, h, dst_w), dtype=x.dtype)
    _backend.resample_last(x, plan.cols.idx, plan.cols.wts, tmp)
    out = np.empty((b, dst_h, dst_w), dtype=x.dtype)
    _backend.resample_mid(tmp, plan.rows.idx, plan.rows.wts, out)
    return out.reshape(lead + (dst_h, dst_w))


def bicubic_adjoint(grad, src_h, src_w):
    """Transpose of ``bicubic_resize`` from ``(src_h, src_w)`` to grad's size."""
    if src_h < 1 or src_w < 1:
        raise ValueError(f"source size must be at least 1x1, got {src_h}x{src_w}")
    g, lead = _as_stack(grad)
    b, dh, dw = g.shape
    if (dh, dw) == (src_h, src_w):
        return g.reshape(lead + (dh, dw)).copy()
    plan = resample_plan(src_h, src_w, dh, dw)
    tmp = np.empty((b, src_h, dw), dtype=g.dtype)
    _backend.resample_mid_adjoint(g, plan.rows.idx, plan.rows.wts, tmp)
    out = np.empty((b, src_h, src_w), dtype=g.dtype)
    _backend.resample_last_adjoint(tmp, plan.cols.idx, plan.cols.wts, out)
    return out.reshape(lead + (src_h, src_w))


def nearest_resize(image, dst_h, dst_w):
    """Nearest-neighbour resize; for debug previews only."""
    a = np.asarray(image)
    h, w = a.shape[-2:]
    ri = np.minimum(((np.arange(dst_h) + 0.5) * h / dst_h).astype(int), h - 1)
    ci = np.minimum(((np.arange(dst_w) + 0.5) * w / dst_w).astype(int), w - 1)
    return a[..., ri[:, None], ci[None, :]]


def crop_to_multiple(plane, scale):
    h, w = plane.shape[-2:]
    return plane[..., : h - h % scale, : w - w % scale]


def degrade(hr, scale):
    """Bicubic LR counterpart of an HR plane, clipped to [0, 1].

    The HR plane is first cropped (top-left anchored) to a multiple of ``scale``.
    """
    if int(scale) != scale or scale < 2:
        raise ValueError(f"degradation scale must be an integer >= 2, got {scale}")
    scale = int(scale)
    hr = crop_to_multiple(np.asarray(hr), scale)
    h, w = hr.shape[-2:]
    if h == 0 or w == 0:
        raise ValueError(f"image smaller than the scale factor {scale}")
    return np.clip(bicubic_resize(hr, h // scale, w // scale), 0.0, 1.0)
