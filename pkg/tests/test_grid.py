"""Integral grids, rectangle sums, snapping, and color conversion."""

import numpy as np
import pytest

from ctxmatch.grid import (
    Image,
    PixelCoord,
    Rectangle,
    build_integral,
    pixel_to_cell,
    rect_sum,
    snap_to_factor,
    to_cielab,
)


def _brute_rect_sum(src, anchor, rect, k):
    """Independent oracle: snap the rectangle like the grid does, clip to the
    image, and sum pixels directly (with trailing partial cells merged)."""
    c, h, w = src.shape
    dx, dy, rw, rh = rect.dx, rect.dy, rect.w, rect.h
    if k > 1:
        dx = ((2 * dx + k) // (2 * k)) * k
        dy = ((2 * dy + k) // (2 * k)) * k
        rw = ((2 * rw + k) // (2 * k)) * k
        rh = ((2 * rh + k) // (2 * k)) * k
    if rw <= 0 or rh <= 0:
        return np.zeros(c)
    x0, y0 = anchor.x + dx, anchor.y + dy
    x1, y1 = x0 + rw, y0 + rh
    cell_w = max(1, w // k)
    cell_h = max(1, h // k)

    def cell_to_px(cell, n_cells, size):
        return size if cell >= n_cells else cell * k

    cx0 = min(max((2 * x0 + k) // (2 * k), 0), cell_w)
    cx1 = min(max((2 * x1 + k) // (2 * k), cx0), cell_w)
    cy0 = min(max((2 * y0 + k) // (2 * k), 0), cell_h)
    cy1 = min(max((2 * y1 + k) // (2 * k), cy0), cell_h)
    px0 = cell_to_px(cx0, cell_w, w)
    px1 = cell_to_px(cx1, cell_w, w)
    py0 = cell_to_px(cy0, cell_h, h)
    py1 = cell_to_px(cy1, cell_h, h)
    return src[:, py0:py1, px0:px1].sum(axis=(1, 2))


class TestColor:
    def test_black(self):
        img = Image.from_array(np.zeros((2, 2, 3)))
        lab = to_cielab(img)
        assert np.allclose(lab.data[0], 0.0, atol=1e-9)

    def test_white(self):
        img = Image.from_array(np.ones((2, 2, 3)))
        lab = to_cielab(img)
        assert np.allclose(lab.data[0], 100.0, atol=1e-6)
        assert np.allclose(lab.data[1:], 0.0, atol=1e-4)

    def test_mid_grey(self):
        # reference colorimetry evaluated independently: sRGB 0.5 ->
        # linear 0.21404114, Y = 0.21404114, L = 116 f(Y) - 16
        lin = ((0.5 + 0.055) / 1.055) ** 2.4
        L = 116.0 * lin ** (1.0 / 3.0) - 16.0
        img = Image.from_array(np.full((2, 2, 3), 0.5))
        lab = to_cielab(img)
        # the sRGB matrix's luminance row sums to 1 + 1e-7, hence the tolerance
        assert lab.data[0, 0, 0] == pytest.approx(L, abs=1e-4)
        assert abs(lab.data[1, 0, 0]) < 1e-4
        assert abs(lab.data[2, 0, 0]) < 1e-4

    def test_wrong_channels(self):
        with pytest.raises(ValueError):
            to_cielab(Image(data=np.zeros((1, 4, 4))))


class TestBuildIntegral:
    def test_ones_k1_full(self):
        g = build_integral(np.ones((1, 2, 2)), factor=1)
        v, _ = rect_sum(g, PixelCoord(0, 0), Rectangle(0, 0, 2, 2))
        assert v[0] == 4.0

    def test_ones_k4_full(self):
        src = np.ones((1, 8, 8))
        g = build_integral(src, factor=4)
        v, _ = rect_sum(g, PixelCoord(0, 0), Rectangle(0, 0, 8, 8))
        assert v[0] == pytest.approx(src.sum())

    def test_empty_intersection(self):
        g = build_integral(np.ones((1, 8, 8)), factor=1)
        v, r = rect_sum(g, PixelCoord(0, 0), Rectangle(100, 100, 2, 2))
        assert np.all(v == 0.0)
        assert r is None

    def test_bad_factor(self):
        with pytest.raises(ValueError):
            build_integral(np.ones((1, 4, 4)), factor=0)


class TestRectSum:
    def test_ones_2x2(self):
        g = build_integral(np.ones((1, 4, 4)), factor=1)
        v, _ = rect_sum(g, PixelCoord(0, 0), Rectangle(0, 0, 2, 2))
        assert v[0] == 4.0

    def test_corner_clip(self):
        rng = np.random.default_rng(0)
        src = rng.random((2, 6, 7))
        g = build_integral(src, factor=1)
        # anchor at corner, rect hangs off the top-left
        v, _ = rect_sum(g, PixelCoord(0, 0), Rectangle(-2, -2, 4, 4))
        assert np.allclose(v, src[:, 0:2, 0:2].sum(axis=(1, 2)))

    def test_snap_5_equals_4(self):
        rng = np.random.default_rng(1)
        src = rng.random((1, 16, 16))
        g = build_integral(src, factor=4)
        v5, _ = rect_sum(g, PixelCoord(4, 4), Rectangle(0, 0, 5, 5))
        v4, _ = rect_sum(g, PixelCoord(4, 4), Rectangle(0, 0, 4, 4))
        assert v5[0] == v4[0]

    def test_random_brute_force(self):
        rng = np.random.default_rng(7)
        for trial in range(1000):
            h = int(rng.integers(4, 24))
            w = int(rng.integers(4, 24))
            k = int(rng.choice([1, 2, 4]))
            src = rng.random((2, h, w))
            g = build_integral(src, factor=k)
            anchor = PixelCoord(int(rng.integers(0, w)), int(rng.integers(0, h)))
            rect = Rectangle(int(rng.integers(-10, 10)), int(rng.integers(-10, 10)),
                             int(rng.integers(1, 12)), int(rng.integers(1, 12)))
            got, _ = rect_sum(g, anchor, rect)
            want = _brute_rect_sum(src, anchor, rect, k)
            assert np.allclose(got, want, rtol=1e-6, atol=1e-12), (trial, anchor, rect, k)

    def test_single_pixel_reproduces_source(self):
        rng = np.random.default_rng(3)
        src = rng.random((3, 5, 6))
        g = build_integral(src, factor=1)
        for y in range(5):
            for x in range(6):
                v, _ = rect_sum(g, PixelCoord(x, y), Rectangle(0, 0, 1, 1))
                assert np.allclose(v, src[:, y, x], rtol=1e-9, atol=1e-12)

    def test_additive_split(self):
        rng = np.random.default_rng(4)
        src = rng.random((1, 10, 12))
        g = build_integral(src, factor=1)
        whole, _ = rect_sum(g, PixelCoord(2, 3), Rectangle(0, 0, 6, 4))
        left, _ = rect_sum(g, PixelCoord(2, 3), Rectangle(0, 0, 3, 4))
        right, _ = rect_sum(g, PixelCoord(2, 3), Rectangle(3, 0, 3, 4))
        assert whole[0] == pytest.approx(left[0] + right[0], rel=1e-12)


class TestSnapping:
    def test_snap_values(self):
        # round to nearest multiple, half away from zero on the upper side
        assert snap_to_factor(5, 4) == 4
        assert snap_to_factor(6, 4) == 8
        assert snap_to_factor(2, 4) == 4
        assert snap_to_factor(1, 4) == 0
        assert snap_to_factor(-5, 4) == -4
        assert snap_to_factor(7, 1) == 7

    def test_pixel_to_cell_clamps(self):
        assert pixel_to_cell(0, 4, 5) == 0
        assert pixel_to_cell(100, 4, 5) == 5


class TestRectangleValidation:
    def test_min_size(self):
        with pytest.raises(ValueError):
            Rectangle(0, 0, 0, 3)
        with pytest.raises(ValueError):
            Rectangle(0, 0, 3, 0)


class TestImage:
    def test_from_array_shape(self):
        img = Image.from_array(np.zeros((4, 6, 3)))
        assert img.width == 6 and img.height == 4 and img.channels == 3

    def test_nonfinite_rejected(self):
        arr = np.zeros((2, 2, 1))
        arr[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            Image.from_array(arr)
