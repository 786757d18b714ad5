"""Image ingestion, colour handling, patch extraction and the easy-to-hard curriculum.

Image planes are 2-D float64 arrays in [0, 1]. Colour images are split into
BT.601 full-range Y/Cb/Cr; only Y goes through the network.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .resample import degrade, keys_kernel

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (1.2, 1.0, 0.8, 0.5, 0.0)

# BT.601 full range
_RGB2YCC = np.array([[0.299, 0.587, 0.114],
                     [-0.168736, -0.331264, 0.5],
                     [0.5, -0.418688, -0.081312]])
_YCC2RGB = np.array([[1.0, 0.0, 1.402],
                     [1.0, -0.344136, -0.714136],
                     [1.0, 1.772, 0.0]])


class DataError(ValueError):
    """Unusable input data (unreadable images, empty curriculum stages, ...)."""


# ---------------------------------------------------------------- image I/O

def read_png(path):
    """Load an 8-bit PNG as float in [0, 1]: ``[h, w]`` for grey, ``[h, w, 3]`` for colour."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I;16", "I", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def quantize(a):
    return np.clip(np.round(np.asarray(a) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, image):
    Image.fromarray(quantize(image)).save(path, format="PNG")


def list_pngs(directory):
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {directory}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")


def load_luma_dir(directory):
    """Y planes of every readable PNG in ``directory``, sorted by file name.

    Unreadable files are logged and skipped; an empty result raises DataError.
    """
    planes, names = [], []
    for p in list_pngs(directory):
        try:
            img = read_png(p)
        except DataError as exc:
            log.warning("%s", exc)
            continue
        planes.append(img if img.ndim == 2 else rgb_to_ycbcr(img)[0])
        names.append(p.name)
    if not planes:
        raise DataError(f"no usable PNG images in {directory}")
    return planes, names


def rgb_to_ycbcr(rgb):
    """``[h, w, 3]`` RGB in [0, 1] -> (Y, Cb, Cr) planes in [0, 1]."""
    ycc = np.asarray(rgb, dtype=np.float64) @ _RGB2YCC.T
    ycc[..., 1:] += 0.5
    return ycc[..., 0], ycc[..., 1], ycc[..., 2]


def ycbcr_to_rgb(y, cb, cr):
    ycc = np.stack([y, np.asarray(cb) - 0.5, np.asarray(cr) - 0.5], axis=-1)
    return np.clip(ycc @ _YCC2RGB.T, 0.0, 1.0)


# ------------------------------------------------------------- augmentation

def _bicubic_sample(plane, ys, xs):
    """2-D Keys interpolation at arbitrary points; returns values and an in-support mask."""
    h, w = plane.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    inside = (y0 >= 1) & (y0 + 2 <= h - 1) & (x0 >= 1) & (x0 + 2 <= w - 1)
    out = np.zeros(ys.shape)
    for dy in range(-1, 3):
        wy = keys_kernel(ys - (y0 + dy))
        yi = np.clip(y0 + dy, 0, h - 1)
        for dx in range(-1, 3):
            wx = keys_kernel(xs - (x0 + dx))
            xi = np.clip(x0 + dx, 0, w - 1)
            out += wy * wx * plane[yi, xi]
    return out, inside


def rotate45(plane):
    """Rotate 45 degrees counter-clockwise (as displayed) and crop the valid interior.

    Returns the largest centred square whose samples all have full bicubic
    support in the source, or None if nothing fits.
    """
    h, w = plane.shape
    side = int(min(h, w) / math.sqrt(2))
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    c = s = math.sqrt(0.5)
    while side > 0:
        off = (side - 1) / 2.0
        u = np.arange(side) - off
        oy, ox = np.meshgrid(u, u, indexing="ij")
        # inverse map: output offset -> source offset (rows grow downward)
        sx = cx + c * ox - s * oy
        sy = cy + s * ox + c * oy
        vals, inside = _bicubic_sample(plane, sy, sx)
        if inside.all():
            return np.clip(vals, 0.0, 1.0)
        side -= 1
    return None


def augment(plane, min_size=0):
    """Original, 90 and 180 degree rotations, plus a 45 degree rotation.

    The 45 degree variant is dropped (with a warning) when its valid interior
    is smaller than ``min_size`` on a side.
    """
    plane = np.asarray(plane, dtype=np.float64)
    out = [plane, np.rot90(plane, 1).copy(), np.rot90(plane, 2).copy()]
    r45 = rotate45(plane)
    if r45 is None or r45.shape[0] < max(min_size, 1):
        log.warning("image %s too small for a 45-degree variant", plane.shape)
    else:
        out.append(r45)
    return out


def augment_all(planes, min_size=0):
    """Augment every plane; returns (variants, number of omitted 45-degree variants)."""
    variants, omitted = [], 0
    for p in planes:
        v = augment(p, min_size)
        omitted += 4 - len(v)
        variants.extend(v)
    return variants, omitted


# ---------------------------------------------------------------- patches

def algd(patch):
    """Mean absolute deviation of the patch from its own mean."""
    p = np.asarray(patch, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty patch")
    # centring on one sample first makes constant patches score exactly 0
    d = p - p.flat[0]
    return float(np.abs(d - d.mean()).mean())


@dataclass
class PatchPair:
    lr: np.ndarray
    hr: np.ndarray
    algd: float
    source: int
    offset: tuple  # (row, col) of the HR crop


def extract_patches(hr_images, scale, lr_patch, stride=None, max_count=None, rng_seed=0,
                    algd_on="hr"):
    """Aligned LR/HR training pairs on a regular grid over every HR image.

    ``stride`` is measured on the LR grid (default ``lr_patch // 2``). Images
    smaller than one HR patch are skipped. If more than ``max_count`` pairs
    are found a seeded uniform subsample is kept, in (image, offset) order.
    """
    if algd_on not in ("hr", "lr"):
        raise ValueError(f"algd_on must be 'hr' or 'lr', got {algd_on!r}")
    stride = stride or max(lr_patch // 2, 1)
    hp, hs = scale * lr_patch, scale * stride
    coords, skipped = [], 0
    for i, img in enumerate(hr_images):
        h, w = img.shape
        if h < hp or w < hp:
            skipped += 1
            continue
        for y in range(0, h - hp + 1, hs):
            for x in range(0, w - hp + 1, hs):
                coords.append((i, y, x))
    if skipped:
        log.warning("skipped %d image(s) smaller than one %dx%d HR patch", skipped, hp, hp)
    if max_count is not None and len(coords) > max_count:
        rng = np.random.default_rng(rng_seed)
        keep = np.sort(rng.choice(len(coords), size=max_count, replace=False))
        coords = [coords[k] for k in keep]
    pairs = []
    for i, y, x in coords:
        hr = np.ascontiguousarray(hr_images[i][y:y + hp, x:x + hp])
        lr = degrade(hr, scale)
        pairs.append(PatchPair(lr, hr, algd(hr if algd_on == "hr" else lr), i, (y, x)))
    return pairs


# -------------------------------------------------------------- curriculum

@dataclass
class Stage:
    lam: float
    indices: np.ndarray
    epochs: int

    def __len__(self):
        return len(self.indices)


@dataclass
class CurriculumPlan:
    stages: list
    mean_algd: float
    scores: np.ndarray = field(repr=False)

    @property
    def lambdas(self):
        return [s.lam for s in self.stages]


def _distribution(scores):
    q = np.quantile(scores, [0.0, 0.25, 0.5, 0.75, 1.0])
    return "min %.4g, q25 %.4g, median %.4g, q75 %.4g, max %.4g" % tuple(q)


def build_curriculum(pairs, lambdas=DEFAULT_LAMBDAS, epochs_per_stage=3):
    """Stage i keeps the pairs whose ALGD is at least ``lambdas[i]`` times the pool mean."""
    if not pairs:
        raise DataError("cannot build a curriculum from an empty patch pool")
    lambdas = [float(l) for l in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError(f"lambdas must be strictly decreasing, got {lambdas}")
    if isinstance(epochs_per_stage, int):
        epochs = [epochs_per_stage] * len(lambdas)
    else:
        epochs = list(epochs_per_stage)
        if len(epochs) != len(lambdas):
            raise ValueError("need one epoch budget per stage")
    scores = np.array([p.algd for p in pairs])
    mean = math.fsum(scores) / len(scores)
    stages = []
    for lam, ep in zip(lambdas, epochs):
        # relative slack absorbs rounding in the pool mean (identical patches)
        idx = np.flatnonzero(scores >= lam * mean * (1 - 1e-12))
        if len(idx) == 0:
            raise DataError(f"no patch passes lambda={lam} (threshold {lam * mean:.4g}); "
                            f"ALGD distribution: {_distribution(scores)}")
        stages.append(Stage(lam, idx, ep))
    return CurriculumPlan(stages, mean, scores)


def curriculum_table(plan):
    """Plain-text table of stage sizes and ALGD ranges."""
    lines = [f"# mean ALGD over pool: {plan.mean_algd:.6f}",
             f"{'lambda':>8} {'count':>8} {'min':>10} {'mean':>10} {'max':>10}"]
    for st in plan.stages:
        s = plan.scores[st.indices]
        lines.append(f"{st.lam:>8.3g} {len(st):>8d} {s.min():>10.5f} {s.mean():>10.5f} {s.max():>10.5f}")
    return "\n".join(lines)
