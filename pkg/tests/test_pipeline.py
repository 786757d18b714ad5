import numpy as np
import pytest

from gunsr.data import rgb_to_ycbcr, write_png, ycbcr_to_rgb
from gunsr.metrics import psnr
from gunsr.network import GunTopology, build_gun
from gunsr.pipeline import evaluate, super_resolve, validation_pairs
from gunsr.resample import bicubic_resize, degrade


@pytest.fixture
def model():
    return build_gun(GunTopology(scale=2, steps=2, depth=2, channels=4), 3)


@pytest.fixture
def test_dir(tmp_path, rng):
    for i in range(2):
        write_png(tmp_path / f"img{i}.png", rng.random((30, 27)))
    return tmp_path


def test_super_resolve_grey_and_colour(model, rng):
    grey = rng.random((9, 11))
    out = super_resolve(model, grey, 2)
    assert out.shape == (18, 22) and out.min() >= 0 and out.max() <= 1
    colour = rng.random((9, 11, 3))
    out = super_resolve(model, colour, 2)
    assert out.shape == (18, 22, 3)


def test_super_resolve_chroma_is_bicubic(model, rng):
    colour = rng.random((8, 10, 3))
    y, cb, cr = rgb_to_ycbcr(colour)
    luma = np.clip(model.predict(y).astype(np.float64), 0, 1)
    expect = ycbcr_to_rgb(luma, bicubic_resize(cb, 16, 20), bicubic_resize(cr, 16, 20))
    np.testing.assert_allclose(super_resolve(model, colour, 2), expect, atol=1e-12)


def test_validation_pairs_crop_to_scale(test_dir):
    pairs = validation_pairs(test_dir, 2)
    assert len(pairs) == 2
    for lr, hr in pairs:
        assert hr.shape == (30, 26) and lr.shape == (15, 13)
        np.testing.assert_array_equal(lr, degrade(hr, 2))


def test_evaluate_quantized_matches_rounded_oracle(test_dir):
    exact = evaluate(test_dir, 2)[0]
    rounded = evaluate(test_dir, 2, quantized=True)[0]
    for (_, hr), (name, p, _) in zip(validation_pairs(test_dir, 2), rounded.rows):
        bic = np.clip(bicubic_resize(degrade(hr, 2), *hr.shape), 0, 1)
        assert p == pytest.approx(psnr(np.round(bic * 255) / 255, hr, 2), abs=1e-12)
    assert exact.mean_psnr != rounded.mean_psnr


def test_evaluate_methods(model, test_dir):
    reps = evaluate(test_dir, 2, model, reference_input=True)
    assert [r.method for r in reps] == ["bicubic", "gun", "hr"]
    assert all(len(r.rows) == 2 for r in reps)
    assert reps[2].mean_psnr == np.inf
