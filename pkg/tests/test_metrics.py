import io
import math

import numpy as np
import pytest

from gunsr.metrics import (MetricsReport, bicubic_baseline, gaussian_window, psnr, ssim,
                           write_reports_csv)
from gunsr.resample import bicubic_resize


def test_psnr_identical_is_inf(rng):
    x = rng.random((8, 8))
    assert psnr(x, x) == math.inf


def test_psnr_uniform_error():
    ref = np.full((16, 16), 0.5)
    expected = 10 * math.log10(255 ** 2 / 100)
    assert psnr(ref + 10 / 255, ref) == pytest.approx(expected, abs=1e-9)
    assert psnr(ref + 10 / 255, ref) == pytest.approx(28.13, abs=0.01)


def test_psnr_shave_and_symmetry(rng):
    ref = rng.random((10, 10))
    x = ref.copy()
    x[0, :] += 0.5
    assert psnr(x, ref, shave=1) == math.inf
    y = ref + 0.01 * rng.standard_normal(ref.shape)
    assert psnr(y, ref) == pytest.approx(psnr(ref, y), abs=1e-12)
    with pytest.raises(ValueError):
        psnr(x, ref, shave=5)
    with pytest.raises(ValueError):
        psnr(x[:9], ref)


def test_psnr_decreases_with_noise(rng):
    ref = rng.random((32, 32))
    n = rng.standard_normal(ref.shape)
    vals = [psnr(ref + a * n, ref) for a in (0.01, 0.03, 0.1)]
    assert vals[0] > vals[1] > vals[2]


def test_ssim_identity_and_symmetry(rng):
    x = rng.random((20, 24))
    assert ssim(x, x) == 1.0
    assert ssim(1 - x, x) < 1
    y = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
    assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-9)
    assert -1 <= ssim(x, y) <= 1
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 30)), np.zeros((10, 30)))


def test_ssim_constant_closed_form():
    c1 = (0.01) ** 2
    a, b = 0.2, 0.8
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    assert ssim(np.full((15, 15), a), np.full((15, 15), b)) == pytest.approx(expected, abs=1e-12)


def test_gaussian_window():
    g = gaussian_window()
    assert g.size == 11 and g.sum() == pytest.approx(1.0)
    assert g[5] == g.max()
    np.testing.assert_allclose(g, g[::-1])
    r = np.arange(11) - 5
    np.testing.assert_allclose(g / g[5], np.exp(-r ** 2 / 4.5))


def test_bicubic_baseline(rng):
    np.testing.assert_allclose(bicubic_baseline(np.full((5, 6), 0.3), 3), 0.3, atol=1e-12)
    lr = rng.random((6, 7))
    out = bicubic_baseline(lr, 2)
    assert out.shape == (12, 14)
    np.testing.assert_allclose(out, np.clip(bicubic_resize(lr, 12, 14), 0, 1))


def test_report_csv(rng):
    rep = MetricsReport("bicubic", 2, 2)
    for i in range(3):
        ref = rng.random((16, 16))
        rep.add(f"im{i}.png", np.clip(ref + 0.02, 0, 1), ref)
    buf = io.StringIO()
    write_reports_csv(buf, [rep])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "image,method,scale,psnr,ssim"
    assert len(lines) == 1 + 3 + 1
    assert lines[-1].startswith("mean,bicubic,2,")
    assert float(lines[-1].split(",")[3]) == pytest.approx(rep.mean_psnr, abs=1e-4)
    assert math.isnan(MetricsReport("x", 2, 2).mean_psnr)
