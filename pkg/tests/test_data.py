import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from gunsr.data import (DataError, PatchPair, algd, augment, augment_all, build_curriculum,
                        curriculum_table, extract_patches, load_luma_dir, quantize, read_png,
                        rgb_to_ycbcr, rotate45, write_png, ycbcr_to_rgb)
from gunsr.metrics import psnr
from gunsr.resample import bicubic_resize


def smooth_image(rng, h, w):
    y, x = np.mgrid[0:h, 0:w] / 7.0
    img = 0.5 + 0.2 * np.sin(x + 0.3 * y) + 0.15 * np.cos(0.7 * y - 0.2 * x) + 0.05 * rng.random((h, w))
    return np.clip(img, 0, 1)


def test_ycbcr_fixed_points():
    y, cb, cr = rgb_to_ycbcr(np.ones((1, 1, 3)))
    assert y[0, 0] == pytest.approx(1.0) and cb[0, 0] == pytest.approx(0.5) and cr[0, 0] == pytest.approx(0.5)
    y, cb, cr = rgb_to_ycbcr(np.full((2, 2, 3), 0.3))
    np.testing.assert_allclose(y, 0.3)
    np.testing.assert_allclose([cb, cr], 0.5, atol=1e-12)


def test_ycbcr_round_trip(rng):
    rgb = rng.integers(0, 256, (16, 16, 3)) / 255.0
    back = quantize(ycbcr_to_rgb(*rgb_to_ycbcr(rgb))).astype(int)
    assert np.abs(back - np.round(rgb * 255)).max() <= 1


def test_png_io(tmp_path, rng):
    grey = rng.integers(0, 256, (5, 7)).astype(np.uint8)
    Image.fromarray(grey).save(tmp_path / "g.png")
    a = read_png(tmp_path / "g.png")
    assert a.shape == (5, 7)
    np.testing.assert_array_equal(quantize(a), grey)
    write_png(tmp_path / "c.png", rng.random((4, 6, 3)))
    assert read_png(tmp_path / "c.png").shape == (4, 6, 3)
    (tmp_path / "bad.png").write_bytes(b"not a png")
    with pytest.raises(DataError):
        read_png(tmp_path / "bad.png")
    planes, names = load_luma_dir(tmp_path)
    assert names == ["c.png", "g.png"] and planes[0].shape == (4, 6)


def test_load_luma_dir_empty(tmp_path):
    (tmp_path / "x.png").write_bytes(b"junk")
    with pytest.raises(DataError):
        load_luma_dir(tmp_path)
    with pytest.raises(DataError):
        load_luma_dir(tmp_path / "missing")


def test_augment_group_and_constant(rng):
    img = rng.random((40, 40))
    v = augment(img)
    assert len(v) == 4
    np.testing.assert_array_equal(np.rot90(v[1]), v[2])
    for p in augment(np.full((40, 30), 0.6)):
        np.testing.assert_allclose(p, 0.6, atol=1e-12)


def _edge_orientation(plane):
    gr, gc = np.gradient(plane)
    gy = -gr  # y axis pointing up
    m2 = gy * gy + gc * gc
    phi = np.arctan2(gy, gc)
    theta = 0.5 * math.atan2(np.sum(m2 * np.sin(2 * phi)), np.sum(m2 * np.cos(2 * phi)))
    return (math.degrees(theta) + 90) % 180


def test_rotate45_orientation():
    step = np.zeros((81, 81))
    step[41:] = 1.0
    assert _edge_orientation(step) == pytest.approx(0, abs=1)
    r = rotate45(step)
    inner = r[5:-5, 5:-5]
    assert abs(_edge_orientation(inner) - 45) <= 2
    assert r.shape[0] >= 81 / math.sqrt(2) - 4


def test_rotate45_too_small(caplog):
    assert rotate45(np.zeros((3, 3))) is None
    out = augment(np.zeros((12, 12)), min_size=20)
    assert len(out) == 3
    variants, omitted = augment_all([np.zeros((12, 12)), np.zeros((60, 60))], min_size=20)
    assert omitted == 1 and len(variants) == 7


def test_algd():
    assert algd(np.full((3, 3), 0.4)) == 0
    assert algd(np.array([[0, 0], [1, 1]])) == 0.5
    with pytest.raises(ValueError):
        algd(np.zeros((0, 0)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=4), st.floats(-5, 5))
def test_algd_shift_invariant(vals, c):
    p = np.array(vals).reshape(2, 2)
    assert algd(p) >= 0
    assert algd(p + c) == pytest.approx(algd(p), abs=1e-9)


def test_extract_counts():
    pairs = extract_patches([np.zeros((48, 48))], 4, 12, stride=12)
    assert len(pairs) == 1
    assert pairs[0].lr.shape == (12, 12) and pairs[0].hr.shape == (48, 48)
    assert all(p.algd == 0 for p in extract_patches([np.full((64, 64), 0.3)], 2, 8))
    assert extract_patches([np.zeros((10, 10))], 2, 8) == []
    many = extract_patches([np.zeros((80, 80))], 2, 8)
    assert len(many) == 81  # stride 4 on the LR grid: 9 x 9 positions


def test_extract_subsample_seeded(rng):
    img = [smooth_image(rng, 60, 60)]
    a = extract_patches(img, 2, 8, max_count=10, rng_seed=3)
    b = extract_patches(img, 2, 8, max_count=10, rng_seed=3)
    assert len(a) == 10
    assert [p.offset for p in a] == [p.offset for p in b] == sorted(p.offset for p in a)
    for p in a:
        assert p.hr.shape == (2 * p.lr.shape[0], 2 * p.lr.shape[1])
        assert p.algd == algd(p.hr)
    lr_based = extract_patches(img, 2, 8, max_count=10, rng_seed=3, algd_on="lr")
    assert lr_based[0].algd == algd(lr_based[0].lr)


def test_pair_alignment(rng):
    img = smooth_image(rng, 70, 70)
    pairs = extract_patches([img], 2, 10, stride=5)
    checked = 0
    for p in pairs:
        y, x = p.offset
        if y < 1 or x < 1 or y + 21 > 70 or x + 21 > 70:
            continue
        up = bicubic_resize(p.lr, 20, 20)
        own = psnr(up, p.hr, 2)
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            assert own > psnr(up, img[y + dy:y + dy + 20, x + dx:x + dx + 20], 2)
        checked += 1
    assert checked > 0


def _pairs(scores):
    z = np.zeros((2, 2))
    return [PatchPair(z, z, s, 0, (i, 0)) for i, s in enumerate(scores)]


def test_curriculum_nesting(rng):
    scores = rng.random(200) ** 2
    plan = build_curriculum(_pairs(scores), epochs_per_stage=3)
    sets = [set(s.indices.tolist()) for s in plan.stages]
    assert all(a <= b for a, b in zip(sets, sets[1:]))
    assert len(sets[0]) < len(sets[-1]) == 200
    assert plan.lambdas == [1.2, 1.0, 0.8, 0.5, 0.0]
    assert plan.mean_algd == pytest.approx(scores.mean())
    for s in plan.stages:
        assert (scores[s.indices] >= s.lam * plan.mean_algd * (1 - 1e-12)).all()
        assert s.epochs == 3
    table = curriculum_table(plan).splitlines()
    assert len(table) == 2 + 5


def test_curriculum_identical_patches():
    plan = build_curriculum(_pairs([0.3] * 5), [1.0, 0.0])
    assert len(plan.stages[0]) == 5
    with pytest.raises(DataError, match="lambda=1.2"):
        build_curriculum(_pairs([0.3] * 5))


def test_curriculum_validation():
    with pytest.raises(ValueError):
        build_curriculum(_pairs([0.1, 0.2]), [0.5, 1.0])
    with pytest.raises(DataError):
        build_curriculum([])
    plan = build_curriculum(_pairs([0.1, 0.2]), [0.0])
    assert len(plan.stages) == 1 and len(plan.stages[0]) == 2
