"""PSNR / SSIM on [0, 1] luminance planes and the bicubic baseline."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .resample import bicubic_resize

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"image sizes differ: {x.shape} vs {ref.shape}")
    if x.ndim != 2:
        raise ValueError(f"expected 2-D planes, got shape {x.shape}")
    return x, ref


def shave_border(plane, shave):
    if shave <= 0:
        return plane
    return plane[shave:-shave, shave:-shave]


def psnr(x, ref, shave=0):
    """Peak signal-to-noise ratio in dB for peak 1.0; ``inf`` for identical planes."""
    x, ref = _check_pair(x, ref)
    if 2 * shave >= min(x.shape):
        raise ValueError(f"shave={shave} leaves nothing of a {x.shape} image")
    d = shave_border(x, shave) - shave_border(ref, shave)
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalised 1-D Gaussian; the 2-D window is its outer product."""
    u = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(u * u) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(a, g):
    a = sliding_window_view(a, g.size, axis=0) @ g
    return sliding_window_view(a, g.size, axis=1) @ g


def ssim(x, ref, data_range=1.0):
    """Mean structural similarity over all fully-contained 11x11 Gaussian windows."""
    x, ref = _check_pair(x, ref)
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(ref, g)
    sxx = _filter_valid(x * x, g) - mu_x * mu_x
    syy = _filter_valid(ref * ref, g) - mu_y * mu_y
    sxy = _filter_valid(x * ref, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def bicubic_baseline(lr, scale):
    lr = np.asarray(lr, dtype=np.float64)
    h, w = lr.shape
    return np.clip(bicubic_resize(lr, h * scale, w * scale), 0.0, 1.0)


@dataclass
class MetricsReport:
    method: str
    scale: int
    shave: int
    rows: list = field(default_factory=list)  # (image, psnr, ssim)

    def add(self, image, x, ref):
        x, ref = _check_pair(x, ref)
        self.rows.append((image, psnr(x, ref, self.shave),
                          ssim(shave_border(x, self.shave), shave_border(ref, self.shave))))

    @property
    def mean_psnr(self):
        return float(np.mean([r[1] for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self):
        return float(np.mean([r[2] for r in self.rows])) if self.rows else math.nan


def write_reports_csv(path_or_file, reports):
    """CSV ``image,method,scale,psnr,ssim``; one mean row per report after its images."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image", "method", "scale", "psnr", "ssim"])
        for rep in reports:
            for name, p, s in rep.rows:
                w.writerow([name, rep.method, rep.scale, f"{p:.4f}", f"{s:.6f}"])
            w.writerow(["mean", rep.method, rep.scale, f"{rep.mean_psnr:.4f}", f"{rep.mean_ssim:.6f}"])
    finally:
        if own:
            fh.close()
