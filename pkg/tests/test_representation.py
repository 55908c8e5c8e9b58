"""Rectangle sampling, image representations, crop alignment, feature diffs."""

import numpy as np
import pytest

from ctxmatch.codebook import train_kmeans
from ctxmatch.features import filter_bank_17
from ctxmatch.grid import Image, PixelCoord, Rectangle, rect_sum, to_cielab
from ctxmatch.representation import (
    AVERAGE_FAMILY,
    FeatureIndex,
    build_representation,
    crop_align,
    decode_index,
    encode_index,
    family_layout,
    feature_diff,
    feature_values,
    sample_rectangles,
    total_dimensionality,
)


class TestSampleRectangles:
    def test_count_and_first(self):
        rs = sample_rectangles(seed=0, count=200, max_extent=100)
        assert len(rs) == 200
        assert rs.rects[0] == Rectangle(0, 0, 1, 1)

    def test_determinism(self):
        a = sample_rectangles(seed=5, count=50, max_extent=30)
        b = sample_rectangles(seed=5, count=50, max_extent=30)
        assert a.rects == b.rects
        c = sample_rectangles(seed=6, count=50, max_extent=30)
        assert a.rects != c.rects

    def test_bounds(self):
        rs = sample_rectangles(seed=1, count=500, max_extent=40)
        for r in rs.rects:
            assert -40 <= r.dx <= 40 and -40 <= r.dy <= 40
            assert 1 <= r.w <= 40 and 1 <= r.h <= 40

    def test_count_validation(self):
        with pytest.raises(ValueError):
            sample_rectangles(seed=0, count=0)


class TestIndexCodec:
    def test_layout(self):
        per_rect, offs = family_layout((32, 16, 17))
        assert per_rect == 65
        assert offs == (0, 32, 48)
        assert total_dimensionality((32, 16, 17), 200) == 13000

    def test_round_trip_exhaustive(self):
        chans = (5, 3, 17)
        total = total_dimensionality(chans, 4)
        for flat in range(total):
            idx = decode_index(flat, chans)
            assert encode_index(idx, chans) == flat
            assert 0 <= idx.rect_index < 4
            assert 0 <= idx.channel < chans[idx.family]


def _toy_setup(seed=0, h=40, w=48, k=8):
    rng = np.random.default_rng(seed)
    arr = rng.random((h, w, 3))
    img = Image.from_array(arr)
    lab = to_cielab(img)
    fb = filter_bank_17(lab)
    samples = fb.data.reshape(-1, fb.dim)[::5]
    cb = train_kmeans(samples, k, seed=0, kind="texton")
    return img, {"texton": cb}


class TestBuildRepresentation:
    def test_structure(self):
        img, cbs = _toy_setup()
        rep = build_representation(img, cbs, ("texton",), bow_factor=4)
        assert rep.families == ("texton", AVERAGE_FAMILY)
        assert rep.family_channels == (8, 17)
        assert rep.grids["texton"].factor == 4
        assert rep.grids[AVERAGE_FAMILY].factor == 1

    def test_bow_density_full_image_is_one(self):
        # soft-assignment weights sum to one per pixel, so the density of the
        # full-image rectangle summed over all words is one
        img, cbs = _toy_setup()
        rep = build_representation(img, cbs, ("texton",), bow_factor=4)
        g = rep.grids["texton"]
        v, _ = rect_sum(g, PixelCoord(0, 0), Rectangle(0, 0, img.width, img.height))
        assert v.sum() == pytest.approx(img.width * img.height, rel=1e-9)

    def test_average_grid_full_image_oracle(self):
        img, cbs = _toy_setup()
        rep = build_representation(img, cbs, ("texton",), bow_factor=4)
        fb = filter_bank_17(to_cielab(img))
        g = rep.grids[AVERAGE_FAMILY]
        v, _ = rect_sum(g, PixelCoord(0, 0), Rectangle(0, 0, img.width, img.height))
        assert np.allclose(v, fb.data.sum(axis=(0, 1)), rtol=1e-9)

    def test_missing_codebook(self):
        img, cbs = _toy_setup()
        with pytest.raises(ValueError):
            build_representation(img, cbs, ("texton", "sift"))


class TestCropAlign:
    def test_interior_untouched(self):
        r = Rectangle(-2, -2, 5, 5)
        a, b = crop_align(r, (20, 20), (25, 20), (50, 40), (50, 40))
        assert a == r and b == r

    def test_union_of_clips(self):
        # anchor1 forces a left clip of 3, anchor2 a right clip of 2
        r = Rectangle(-5, 0, 10, 4)
        a, b = crop_align(r, (2, 10), (46, 10), (49, 40), (49, 40))
        assert a == b == Rectangle(-2, 0, 5, 4)

    def test_fully_clipped(self):
        r = Rectangle(10, 0, 4, 4)
        a, b = crop_align(r, (48, 5), (5, 5), (50, 40), (50, 40))
        assert a is None and b is None

    def test_vertical_clip(self):
        r = Rectangle(0, -4, 3, 8)
        a, _ = crop_align(r, (10, 1), (10, 30), (40, 32), (40, 32))
        # top clip 3 from anchor1, bottom clip 2 from anchor2
        assert a == Rectangle(0, -1, 3, 3)


class TestFeatureDiff:
    def test_self_difference_zero(self):
        img, cbs = _toy_setup()
        rep = build_representation(img, cbs, ("texton",), bow_factor=4)
        rects = sample_rectangles(seed=0, count=20, max_extent=12)
        for flat in range(0, total_dimensionality(rep.family_channels, 20), 37):
            idx = decode_index(flat, rep.family_channels)
            v = feature_diff(rep, rep, (13, 17), (13, 17), rects, idx)
            assert v == 0.0

    def test_translation_zero_on_shifted_crops(self):
        # identical content under a horizontal shift: interior differences
        # of the average grid are zero for rectangles that stay in bounds
        rng = np.random.default_rng(3)
        base = rng.random((120, 160, 3))
        s = 6
        img1 = Image.from_array(base[:, : 160 - s])
        img2 = Image.from_array(base[:, s:])
        _, cbs = _toy_setup()
        rep1 = build_representation(img1, cbs, ("texton",), bow_factor=4)
        rep2 = build_representation(img2, cbs, ("texton",), bow_factor=4)
        rects = sample_rectangles(seed=2, count=10, max_extent=4)
        # anchor margin of 60 keeps every rectangle plus the widest filter
        # support (LoG sigma 8, radius 32) interior in both crops
        fam = len(rep1.families) - 1  # average family
        for ri, r in enumerate(rects.rects):
            for ch in range(17):
                idx = FeatureIndex(rect_index=ri, family=fam, channel=ch)
                v = feature_diff(rep1, rep2, (80, 60), (80 - s, 60), rects, idx)
                assert abs(v) < 1e-6, (r, ch)

    def test_average_density_hand_oracle(self):
        img, cbs = _toy_setup(seed=7)
        rep = build_representation(img, cbs, ("texton",), bow_factor=4)
        fb = filter_bank_17(to_cielab(img))
        rects = sample_rectangles(seed=0, count=1)
        idx = FeatureIndex(rect_index=0, family=1, channel=2)
        # rect 0 is the 1x1 at offset 0: difference of single-pixel densities
        v = feature_diff(rep, rep, (5, 9), (20, 11), rects, idx)
        want = fb.data[9, 5, 2] - fb.data[11, 20, 2]
        assert v == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_antisymmetry_and_absolute(self):
        img1, cbs = _toy_setup(seed=4)
        img2, _ = _toy_setup(seed=5)
        rep1 = build_representation(img1, cbs, ("texton",), bow_factor=4)
        rep2 = build_representation(img2, cbs, ("texton",), bow_factor=4)
        rects = sample_rectangles(seed=1, count=30, max_extent=15)
        rng = np.random.default_rng(0)
        for _ in range(50):
            flat = int(rng.integers(0, total_dimensionality(rep1.family_channels, 30)))
            idx = decode_index(flat, rep1.family_channels)
            p = (int(rng.integers(0, 48)), int(rng.integers(0, 40)))
            q = (int(rng.integers(0, 48)), int(rng.integers(0, 40)))
            v = feature_diff(rep1, rep2, p, q, rects, idx)
            vr = feature_diff(rep2, rep1, q, p, rects, idx)
            va = feature_diff(rep1, rep2, p, q, rects, idx, absolute=True)
            assert vr == pytest.approx(-v, abs=1e-12)
            assert va == pytest.approx(abs(v), abs=1e-12)

    def test_bow_diff_bounded(self):
        # bow densities are in [0, 1], so differences lie in [-1, 1]
        img1, cbs = _toy_setup(seed=8)
        img2, _ = _toy_setup(seed=9)
        rep1 = build_representation(img1, cbs, ("texton",), bow_factor=4)
        rep2 = build_representation(img2, cbs, ("texton",), bow_factor=4)
        rects = sample_rectangles(seed=3, count=40, max_extent=20)
        rng = np.random.default_rng(1)
        xs1 = rng.integers(0, 48, 200)
        ys1 = rng.integers(0, 40, 200)
        xs2 = rng.integers(0, 48, 200)
        ys2 = rng.integers(0, 40, 200)
        for ri, r in enumerate(rects.rects):
            for ch in range(8):
                v = feature_values(rep1, rep2, xs1, ys1, xs2, ys2, r, 0, ch)
                assert np.all(v >= -1.0 - 1e-9) and np.all(v <= 1.0 + 1e-9)

    def test_size_mismatch(self):
        img, cbs = _toy_setup()
        rep = build_representation(img, cbs, ("texton",))
        img2, _ = _toy_setup(h=30, w=30)
        rep2 = build_representation(img2, cbs, ("texton",))
        rects = sample_rectangles(seed=0, count=1)
        with pytest.raises(ValueError):
            feature_diff(rep, rep2, (0, 0), (0, 0), rects,
                         FeatureIndex(0, 0, 0))
