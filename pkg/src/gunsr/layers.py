"""Network layers with uniform forward/backward contracts.

A convolution block is conv -> batch norm -> ReLU (the output layer is a bare
conv). The upsampling layer has no parameters: bicubic forward, and either
the exact bicubic transpose or a plain bicubic downsample on the way back.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from .resample import bicubic_adjoint, bicubic_resize
from .tensor import (ConvParams, ShapeError, _im2col, conv2d_backward, conv2d_forward,
                     relu_backward, relu_forward)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS
    # retention of the running statistics per train-mode batch
    momentum: float = BN_MOMENTUM

    @classmethod
    def fresh(cls, channels, dtype=np.float32, eps=BN_EPS, momentum=BN_MOMENTUM):
        return cls(np.ones(channels, dtype), np.zeros(channels, dtype),
                   np.zeros(channels, dtype), np.ones(channels, dtype), eps, momentum)


@dataclass
class BNCache:
    mode: str
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def bn_forward(x, state, mode="train"):
    """Per-channel batch normalisation. Train mode updates the running stats in place."""
    if x.ndim != 4 or x.shape[1] != state.gamma.shape[0]:
        raise ShapeError(f"input {x.shape} does not match {state.gamma.shape[0]} BN channels")
    if mode == "train":
        n, _, h, w = x.shape
        if n * h * w == 1:
            raise ValueError("batch norm in train mode needs more than one value per channel")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = state.momentum
        state.running_mean[...] = m * state.running_mean + (1 - m) * mean
        state.running_var[...] = m * state.running_var + (1 - m) * var
    elif mode == "infer":
        mean = state.running_mean
        var = state.running_var
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    xhat = (x - mean.astype(x.dtype)[None, :, None, None]) * inv_std[None, :, None, None]
    out = state.gamma[None, :, None, None] * xhat + state.beta[None, :, None, None]
    return out.astype(x.dtype, copy=False), BNCache(mode, xhat, inv_std, state.gamma)


def bn_backward(cache, grad_out):
    """Gradients through the batch statistics: ``(grad_input, grad_gamma, grad_beta)``."""
    if cache.mode != "train":
        raise ValueError("cannot backpropagate through an inference-mode batch norm")
    n, _, h, w = grad_out.shape
    count = n * h * w
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * cache.xhat).sum(axis=(0, 2, 3))
    scale = (cache.gamma * cache.inv_std / count)[None, :, None, None]
    grad_input = scale * (count * grad_out
                          - grad_beta[None, :, None, None]
                          - cache.xhat * grad_gamma[None, :, None, None])
    return grad_input.astype(grad_out.dtype, copy=False), grad_gamma, grad_beta


def upsample_forward(x, target):
    th, tw = target
    h, w = x.shape[-2:]
    if th < h or tw < w:
        raise ShapeError(f"upsampling target {target} is smaller than the input {(h, w)}")
    return bicubic_resize(x, th, tw)


def upsample_backward(grad_out, src, mode="adjoint"):
    """Route an error map back to the pre-upsampling grid.

    ``adjoint`` applies the exact transpose of the forward resize; ``plain``
    bicubic-downsamples the error instead.
    """
    sh, sw = src
    gh, gw = grad_out.shape[-2:]
    if sh > gh or sw > gw:
        raise ShapeError(f"source size {src} is larger than the gradient {(gh, gw)}")
    if mode == "adjoint":
        return bicubic_adjoint(grad_out, sh, sw)
    if mode == "plain":
        return bicubic_resize(grad_out, sh, sw)
    raise ValueError(f"backward_resample must be 'adjoint' or 'plain', got {mode!r}")


class LayerKind(enum.Enum):
    INPUT_CONV = "input_conv"
    STEP_CONV3 = "step_conv3"
    STEP_CONV1 = "step_conv1"
    UPSAMPLE = "upsample"
    OUTPUT_CONV = "output_conv"


@dataclass
class ConvBlock:
    """conv (+ BN) (+ ReLU); parameters live in the model's named stores."""

    kind: LayerKind
    conv: str
    c_in: int
    c_out: int
    k: int
    bn: str | None = None
    relu: bool = True

    def param_shapes(self):
        shapes = {f"{self.conv}.weight": (self.c_out, self.c_in, self.k, self.k),
                  f"{self.conv}.bias": (self.c_out,)}
        if self.bn:
            shapes[f"{self.bn}.gamma"] = (self.c_out,)
            shapes[f"{self.bn}.beta"] = (self.c_out,)
        return shapes

    def buffer_shapes(self):
        if not self.bn:
            return {}
        return {f"{self.bn}.running_mean": (self.c_out,),
                f"{self.bn}.running_var": (self.c_out,)}

    def conv_params(self, params):
        return ConvParams(params[f"{self.conv}.weight"], params[f"{self.conv}.bias"])

    def bn_state(self, params, buffers, eps, momentum):
        return BatchNormState(params[f"{self.bn}.gamma"], params[f"{self.bn}.beta"],
                              buffers[f"{self.bn}.running_mean"],
                              buffers[f"{self.bn}.running_var"], eps, momentum)

    def forward(self, x, params, buffers, mode, eps=BN_EPS, momentum=BN_MOMENTUM):
        cache = {"x": x}
        cp = self.conv_params(params)
        # patch matrices are only worth keeping when a backward pass follows
        cache["cols"] = _im2col(x, self.k) if mode == "train" else None
        z = conv2d_forward(x, cp, cols=cache["cols"])
        if self.bn:
            z, cache["bn"] = bn_forward(z, self.bn_state(params, buffers, eps, momentum), mode)
        if self.relu:
            cache["pre"] = z
            z = relu_forward(z)
        return z, cache

    def backward(self, cache, grad, params):
        grads = {}
        if self.relu:
            grad = relu_backward(cache["pre"], grad)
        if self.bn:
            grad, grads[f"{self.bn}.gamma"], grads[f"{self.bn}.beta"] = bn_backward(cache["bn"], grad)
        gx, gw, gb = conv2d_backward(cache["x"], self.conv_params(params), grad, cols=cache["cols"])
        grads[f"{self.conv}.weight"] = gw
        grads[f"{self.conv}.bias"] = gb
        return gx, grads


@dataclass
class Upsample:
    step: int  # 1-based index into the resolution schedule
    kind: LayerKind = field(default=LayerKind.UPSAMPLE, init=False)

    def param_shapes(self):
        return {}

    def buffer_shapes(self):
        return {}
