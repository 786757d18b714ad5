"""Binary checkpoint format (little-endian).

::

    magic  "GUNW"                 4 bytes
    u32    version                (1)
    u8     scalar width           (4 = float32, 8 = float64)
    topology:
        u32 scale_num, u32 scale_den
        u8  explicit-sizes flag   [if 1: u32 lr_h, lr_w, hr_h, hr_w]
        u32 steps, u32 depth, u32 channels
        u8  bn_on_input, u8 backward_resample (0 adjoint, 1 plain)
    u32    tensor count
    per tensor: u16 name length, UTF-8 name, u8 ndim, u32 dims[ndim], raw scalars

Tensor names: ``input.weight``, ``step{S}.conv{L}.bias``,
``step{S}.bn{L}.running_mean``, ``output.bias``, ... plus ``meta.bn_eps``.
"""
import os
import struct
import tempfile
from fractions import Fraction

import numpy as np

from .network import GunModel, GunTopology
from .tensor import ShapeError

MAGIC = b"GUNW"
VERSION = 1
_RESAMPLE_CODES = {"adjoint": 0, "plain": 1}
_EPS_NAME = "meta.bn_eps"


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint; ``field`` names what was wrong."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _pack_topology(t):
    out = [struct.pack("<II", t.scale.numerator, t.scale.denominator)]
    if t.explicit_sizes:
        out.append(struct.pack("<B4I", 1, *t.lr_size, *t.hr_size))
    else:
        out.append(struct.pack("<B", 0))
    out.append(struct.pack("<IIIBB", t.steps, t.depth, t.channels, int(t.bn_on_input),
                           _RESAMPLE_CODES[t.backward_resample]))
    return b"".join(out)


def _pack_tensor(name, arr, dtype):
    raw = name.encode("utf-8")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dtype.newbyteorder("<")).tobytes()


def save_checkpoint(model, path):
    dtype = np.dtype(model.dtype)
    if dtype.itemsize not in (4, 8):
        raise CheckpointError("scalar width", f"cannot store {dtype}")
    tensors = list(model.params.items()) + list(model.buffers.items())
    tensors.append((_EPS_NAME, np.array([model.bn_eps])))
    body = [MAGIC, struct.pack("<IB", VERSION, dtype.itemsize), _pack_topology(model.topology),
            struct.pack("<I", len(tensors))]
    body += [_pack_tensor(name, arr, dtype) for name, arr in tensors]
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(body))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, field):
        if self.pos + n > len(self.data):
            raise CheckpointError(field, f"file truncated (need {n} bytes at offset {self.pos})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, field):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), field))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("magic", "not a GUN checkpoint")
    (version,) = r.unpack("I", "version")
    if version != VERSION:
        raise CheckpointError("version", f"unsupported version {version}")
    (width,) = r.unpack("B", "scalar width")
    if width not in (4, 8):
        raise CheckpointError("scalar width", f"unsupported scalar width {width}")
    dtype = np.dtype(np.float32 if width == 4 else np.float64)

    num, den = r.unpack("II", "topology.scale")
    (explicit,) = r.unpack("B", "topology.explicit_sizes")
    lr_size = hr_size = None
    if explicit == 1:
        lh, lw, hh, hw = r.unpack("4I", "topology.sizes")
        lr_size, hr_size = (lh, lw), (hh, hw)
    elif explicit != 0:
        raise CheckpointError("topology.explicit_sizes", f"bad flag {explicit}")
    steps, depth, channels, bn_in, resample = r.unpack("IIIBB", "topology")
    codes = {v: k for k, v in _RESAMPLE_CODES.items()}
    if resample not in codes:
        raise CheckpointError("topology.backward_resample", f"bad code {resample}")
    if bn_in not in (0, 1):
        raise CheckpointError("topology.bn_on_input", f"bad flag {bn_in}")
    if den == 0:
        raise CheckpointError("topology.scale", "zero denominator")
    try:
        topology = GunTopology(scale=Fraction(num, den), steps=steps, depth=depth,
                               channels=channels, bn_on_input=bool(bn_in),
                               backward_resample=codes[resample], lr_size=lr_size,
                               hr_size=hr_size)
    except ValueError as exc:
        raise CheckpointError("topology", str(exc)) from exc

    (count,) = r.unpack("I", "tensor count")
    tensors = {}
    for i in range(count):
        (nlen,) = r.unpack("H", f"tensor[{i}].name")
        try:
            name = r.take(nlen, f"tensor[{i}].name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"tensor[{i}].name", "invalid UTF-8") from exc
        (ndim,) = r.unpack("B", f"{name}.ndim")
        dims = r.unpack(f"{ndim}I", f"{name}.dims")
        n = int(np.prod(dims, dtype=np.int64))
        raw = r.take(n * width, f"{name}.data")
        tensors[name] = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(dims)
    if r.pos != len(r.data):
        raise CheckpointError("trailer", f"{len(r.data) - r.pos} unexpected trailing bytes")

    eps = tensors.pop(_EPS_NAME, None)
    if eps is None or eps.shape != (1,):
        raise CheckpointError(_EPS_NAME, "missing or malformed")
    params, buffers = {}, {}
    for layer in topology.layers():
        for store, shapes in ((params, layer.param_shapes()), (buffers, layer.buffer_shapes())):
            for name, shape in shapes.items():
                if name not in tensors:
                    raise CheckpointError(name, "missing tensor")
                t = tensors.pop(name)
                if t.shape != shape:
                    raise CheckpointError(name, f"shape {t.shape} does not match topology {shape}")
                store[name] = t
    if tensors:
        raise CheckpointError(sorted(tensors)[0], "tensor not part of the topology")
    try:
        return GunModel(topology, params, buffers, bn_eps=float(eps[0]))
    except ShapeError as exc:  # pragma: no cover - guarded above
        raise CheckpointError("tensors", str(exc)) from exc
