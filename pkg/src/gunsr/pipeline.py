"""End-to-end flows shared by the command line and the tests."""
import logging
from dataclasses import dataclass

import numpy as np

from .checkpoint import save_checkpoint
from .data import (DataError, augment_all, build_curriculum, extract_patches, load_luma_dir,
                   list_pngs, read_png, rgb_to_ycbcr, ycbcr_to_rgb)
from .metrics import MetricsReport, bicubic_baseline
from .network import build_gun
from .resample import bicubic_resize, crop_to_multiple, degrade
from .training import stack_pairs, train_curriculum

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    model: object
    plan: object
    report: object
    n_images: int
    omitted_45: int


def validation_pairs(directory, scale):
    """``(lr, hr)`` Y planes for every image in ``directory``."""
    planes, _ = load_luma_dir(directory)
    out = []
    for p in planes:
        hr = crop_to_multiple(p, scale)
        out.append((degrade(hr, scale), hr))
    return out


def prepare_pool(cfg):
    planes, names = load_luma_dir(cfg.train_dir)
    log.info("loaded %d training image(s) from %s", len(planes), cfg.train_dir)
    omitted = 0
    if cfg.augment:
        planes, omitted = augment_all(planes, cfg.scale * cfg.patch)
    pairs = extract_patches(planes, cfg.scale, cfg.patch, cfg.stride, cfg.max_patches,
                            cfg.seed, cfg.algd_on)
    if not pairs:
        raise DataError(f"no {cfg.scale * cfg.patch}px patch fits any training image")
    return pairs, len(names), omitted


def curriculum_for(cfg):
    pairs, _, _ = prepare_pool(cfg)
    return build_curriculum(pairs, cfg.lambdas, cfg.epochs_per_stage)


def train(cfg):
    """Ingest, augment, extract, stage and train; writes the checkpoint if configured."""
    if not cfg.train_dir:
        raise DataError("train_dir is not set")
    pairs, n_images, omitted = prepare_pool(cfg)
    plan = build_curriculum(pairs, cfg.lambdas, cfg.epochs_per_stage)
    lr_bank, hr_bank = stack_pairs(pairs)
    validation = validation_pairs(cfg.val_dir, cfg.scale) if cfg.val_dir else None
    model = build_gun(cfg.topology(), cfg.seed, bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum)
    report = train_curriculum(model, plan, lr_bank, hr_bank, cfg.train_config(),
                              validation=validation)
    if cfg.checkpoint:
        save_checkpoint(model, cfg.checkpoint)
    return TrainResult(model, plan, report, n_images, omitted)


def upscale_luma(model, y):
    return np.clip(model.predict(y).astype(np.float64), 0.0, 1.0)


def super_resolve(model, image, scale):
    """Y through the network, Cb/Cr through bicubic; grey images stay single-plane."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return upscale_luma(model, image)
    y, cb, cr = rgb_to_ycbcr(image)
    h, w = y.shape
    ys = upscale_luma(model, y)
    cbs, crs = (bicubic_resize(c, h * scale, w * scale) for c in (cb, cr))
    return ycbcr_to_rgb(ys, cbs, crs)


def super_resolve_file(model, src, scale):
    return super_resolve(model, read_png(src), scale)


def _to_8bit(plane):
    return np.round(np.clip(plane, 0.0, 1.0) * 255.0) / 255.0


def evaluate(test_dir, scale, model=None, shave=None, reference_input=False, quantized=False):
    """Metrics reports for bicubic and (when given) the model on every test image.

    With ``reference_input`` an extra ``hr`` method scores the HR plane
    against itself. ``quantized`` rounds every reconstruction to 8 bits
    before scoring, as if it had been saved to PNG.
    """
    shave = scale if shave is None else shave
    q = _to_8bit if quantized else (lambda a: a)
    files = list_pngs(test_dir)
    reports = [MetricsReport("bicubic", scale, shave)]
    if model is not None:
        reports.append(MetricsReport("gun", scale, shave))
    if reference_input:
        reports.append(MetricsReport("hr", scale, shave))
    for path in files:
        try:
            img = read_png(path)
        except DataError as exc:
            log.warning("%s", exc)
            continue
        hr = crop_to_multiple(img if img.ndim == 2 else rgb_to_ycbcr(img)[0], scale)
        lr = degrade(hr, scale)
        reports[0].add(path.name, q(bicubic_baseline(lr, scale)), hr)
        if model is not None:
            reports[1].add(path.name, q(upscale_luma(model, lr)), hr)
        if reference_input:
            reports[-1].add(path.name, hr, hr)
    if not reports[0].rows:
        raise DataError(f"no usable PNG images in {test_dir}")
    return reports
