"""Gradual upsampling network: topology, resolution schedule, forward/backward.

The network is an input conv, then ``steps`` stages of
``[upsample, (depth - 1) x conv3x3, conv1x1]``, then a linear output conv.
Each upsampling layer grows the feature maps by a small amount; the last
one always lands exactly on the HR size.
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .layers import BN_EPS, BN_MOMENTUM, ConvBlock, LayerKind, Upsample, upsample_backward, upsample_forward
from .tensor import ShapeError, he_init

DEFAULT_STEPS = {2: 5, 3: 8, 4: 9}
DEFAULT_LR_PATCH = {2: 20, 3: 16, 4: 12}
DEFAULT_DEPTH = 4
DEFAULT_CHANNELS = 64


@dataclass(frozen=True)
class ResolutionSchedule:
    lr: tuple
    hr: tuple
    steps: tuple  # one (h, w) target per upsampling layer

    @property
    def n_steps(self):
        return len(self.steps)

    def sizes(self):
        """Feature-map size entering the network followed by every step target."""
        return (self.lr,) + self.steps


def resolution_schedule(lr, hr, n_steps):
    """Per-step (h, w) targets: ``lr + i * floor((hr - lr) / n_steps)``, last step pinned to ``hr``."""
    (ml, nl), (mh, nh) = tuple(lr), tuple(hr)
    if n_steps < 1:
        raise ValueError(f"number of steps must be >= 1, got {n_steps}")
    if mh < ml or nh < nl:
        raise ValueError(f"HR size {hr} is smaller than LR size {lr}")
    dm = (mh - ml) // n_steps
    dn = (nh - nl) // n_steps
    steps = [(ml + i * dm, nl + i * dn) for i in range(1, n_steps)]
    steps.append((mh, nh))
    return ResolutionSchedule((ml, nl), (mh, nh), tuple(steps))


@dataclass(frozen=True)
class GunTopology:
    """Structural hyper-parameters of one network (one model per scale).

    Either ``scale`` drives the HR size (``hr = floor(lr * scale)``) or a fixed
    ``lr_size``/``hr_size`` pair is given, in which case only that input
    size is accepted.
    """

    scale: Fraction = Fraction(4)
    steps: int | None = None
    depth: int = DEFAULT_DEPTH
    channels: int = DEFAULT_CHANNELS
    bn_on_input: bool = True
    backward_resample: str = "adjoint"
    lr_size: tuple | None = None
    hr_size: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "scale", Fraction(self.scale))
        if self.steps is None:
            if self.scale.denominator != 1 or int(self.scale) not in DEFAULT_STEPS:
                raise ValueError(f"no default step count for scale {self.scale}; pass steps=")
            object.__setattr__(self, "steps", DEFAULT_STEPS[int(self.scale)])
        if (self.lr_size is None) != (self.hr_size is None):
            raise ValueError("lr_size and hr_size must be given together")
        if self.lr_size is not None:
            object.__setattr__(self, "lr_size", tuple(int(v) for v in self.lr_size))
            object.__setattr__(self, "hr_size", tuple(int(v) for v in self.hr_size))
            if any(h < l for l, h in zip(self.lr_size, self.hr_size)):
                raise ValueError(f"hr_size {self.hr_size} smaller than lr_size {self.lr_size}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.depth < 1:
            raise ValueError(f"depth per step must be >= 1, got {self.depth}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.backward_resample not in ("adjoint", "plain"):
            raise ValueError(f"backward_resample must be 'adjoint' or 'plain', "
                             f"got {self.backward_resample!r}")

    @property
    def explicit_sizes(self):
        return self.lr_size is not None

    def hr_for(self, lr):
        lr = tuple(int(v) for v in lr)
        if self.explicit_sizes:
            if lr != self.lr_size:
                raise ShapeError(f"this network only accepts {self.lr_size} inputs, got {lr}")
            return self.hr_size
        return tuple(int(v * self.scale) for v in lr)

    def schedule_for(self, lr):
        return resolution_schedule(lr, self.hr_for(lr), self.steps)

    def layers(self):
        c = self.channels
        out = [ConvBlock(LayerKind.INPUT_CONV, "input", 1, c, 3,
                         bn="input.bn" if self.bn_on_input else None)]
        for s in range(1, self.steps + 1):
            out.append(Upsample(s))
            for l in range(1, self.depth):
                out.append(ConvBlock(LayerKind.STEP_CONV3, f"step{s}.conv{l}", c, c, 3,
                                     bn=f"step{s}.bn{l}"))
            out.append(ConvBlock(LayerKind.STEP_CONV1, f"step{s}.conv{self.depth}", c, c, 1,
                                 bn=f"step{s}.bn{self.depth}"))
        out.append(ConvBlock(LayerKind.OUTPUT_CONV, "output", c, 1, 3, relu=False))
        return out


@dataclass
class GunModel:
    topology: GunTopology
    params: dict   # learnable arrays, in layer order
    buffers: dict  # BN running statistics
    bn_eps: float = BN_EPS
    bn_momentum: float = BN_MOMENTUM
    layers: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.layers is None:
            self.layers = self.topology.layers()
        expected_p, expected_b = {}, {}
        for layer in self.layers:
            expected_p.update(layer.param_shapes())
            expected_b.update(layer.buffer_shapes())
        for store, expected, what in ((self.params, expected_p, "parameter"),
                                      (self.buffers, expected_b, "buffer")):
            if list(store) != list(expected):
                missing = set(expected) - set(store)
                extra = set(store) - set(expected)
                raise ShapeError(f"{what} names do not match topology "
                                 f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
            for name, shape in expected.items():
                if store[name].shape != shape:
                    raise ShapeError(f"{name}: shape {store[name].shape} != {shape}")

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def conv_layers(self):
        return [l for l in self.layers if isinstance(l, ConvBlock)]

    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def copy(self):
        return replace(self, params={k: v.copy() for k, v in self.params.items()},
                       buffers={k: v.copy() for k, v in self.buffers.items()},
                       layers=list(self.layers))

    def astype(self, dtype):
        m = self.copy()
        m.params = {k: v.astype(dtype) for k, v in m.params.items()}
        m.buffers = {k: v.astype(dtype) for k, v in m.buffers.items()}
        return m

    def predict(self, y):
        """Inference-mode forward; ``y`` is ``[n, 1, h, w]`` or a single 2-D plane."""
        plane = np.asarray(y).ndim == 2
        y4 = np.asarray(y, dtype=self.dtype)
        if plane:
            y4 = y4[None, None]
        out, _ = gun_forward(self, y4)
        return out[0, 0] if plane else out


def build_gun(topology, rng_seed, dtype=np.float32, bn_eps=BN_EPS, bn_momentum=BN_MOMENTUM):
    """Fresh model: He-initialised convs, zero biases, BN gamma=1 beta=0."""
    if topology.steps < 1:
        raise ValueError("a network needs at least one upsampling step")
    rng = np.random.default_rng(rng_seed)
    params, buffers = {}, {}
    for layer in topology.layers():
        for name, shape in layer.param_shapes().items():
            if name.endswith(".weight"):
                params[name] = he_init(shape, rng, dtype)
            elif name.endswith(".gamma"):
                params[name] = np.ones(shape, dtype)
            else:
                params[name] = np.zeros(shape, dtype)
        for name, shape in layer.buffer_shapes().items():
            init = np.ones if name.endswith("running_var") else np.zeros
            buffers[name] = init(shape, dtype)
    # stored in single precision in checkpoints; keep the in-memory value identical
    return GunModel(topology, params, buffers, float(np.float32(bn_eps)), bn_momentum)


@dataclass
class ForwardCache:
    schedule: ResolutionSchedule
    layer_caches: list


def gun_forward(model, y, schedule=None, train=False):
    """Run the whole network. Returns ``(output, cache)``; ``cache`` is None unless ``train``."""
    if y.ndim != 4 or y.shape[1] != 1:
        raise ShapeError(f"input must be [n, 1, h, w], got {y.shape}")
    lr = y.shape[2:]
    if schedule is None:
        schedule = model.topology.schedule_for(lr)
    if tuple(lr) != tuple(schedule.lr):
        raise ShapeError(f"input size {tuple(lr)} does not match schedule LR size {schedule.lr}")
    if schedule.n_steps != model.topology.steps:
        raise ShapeError(f"schedule has {schedule.n_steps} steps, network has {model.topology.steps}")
    mode = "train" if train else "infer"
    x = np.ascontiguousarray(y, dtype=model.dtype)
    caches = []
    for layer in model.layers:
        if isinstance(layer, Upsample):
            caches.append(x.shape[2:])
            x = upsample_forward(x, schedule.steps[layer.step - 1])
        else:
            x, c = layer.forward(x, model.params, model.buffers, mode,
                                 model.bn_eps, model.bn_momentum)
            caches.append(c)
    if x.shape[2:] != tuple(schedule.hr):
        raise ShapeError(f"network produced {x.shape[2:]}, schedule expects {schedule.hr}")
    return x, (ForwardCache(schedule, caches) if train else None)


def gun_backward(model, cache, grad_out):
    """Gradients of every learnable parameter, keyed like ``model.params``."""
    if cache is None:
        raise ValueError("gun_backward needs the cache of a train-mode forward")
    grads = {}
    g = grad_out
    for layer, c in zip(reversed(model.layers), reversed(cache.layer_caches)):
        if isinstance(layer, Upsample):
            g = upsample_backward(g, c, model.topology.backward_resample)
        else:
            g, lg = layer.backward(c, g, model.params)
            grads.update(lg)
    return {name: grads[name] for name in model.params}


def flops_estimate(topology, lr_size, hr_size, direct=False):
    """Multiply-accumulate count of one forward pass.

    Input conv at the LR size, every step's conv stack at that step's size,
    output conv at the HR size. ``direct=True`` prices the same layer list
    evaluated entirely at the HR size (interpolate-first networks).
    """
    c = topology.channels
    s_lr = lr_size[0] * lr_size[1]
    s_hr = hr_size[0] * hr_size[1]
    per_pixel_step = (topology.depth - 1) * c * 9 * c + c * 1 * c
    if topology.steps == 0:
        step_sizes = []
    else:
        step_sizes = [h * w for h, w in resolution_schedule(lr_size, hr_size, topology.steps).steps]
    if direct:
        s_lr = s_hr
        step_sizes = [s_hr] * len(step_sizes)
    return 9 * c * s_lr + sum(per_pixel_step * s for s in step_sizes) + c * 9 * s_hr
