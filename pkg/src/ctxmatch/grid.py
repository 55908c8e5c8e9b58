"""Multi-channel image grids, CIELab conversion, integral images and rectangle sums.

All raster data is stored channel-planar as float64 arrays of shape (channels,
height, width). Integral grids support an integer sub-sampling factor k: cells
are k x k pixel blocks, and trailing partial rows/columns are merged into the
last cell so no pixel mass is lost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np


class PixelCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle placed relative to an anchor pixel.

    offset is the signed (dx, dy) of the top-left corner relative to the
    anchor; size is (w, h) in pixels.
    """

    dx: int
    dy: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("rectangle size must be >= 1, got %dx%d" % (self.w, self.h))


@dataclass(frozen=True)
class Image:
    """Channel-planar raster: data has shape (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("image data must be (channels, height, width)")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite samples")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @staticmethod
    def from_array(arr: np.ndarray) -> "Image":
        """Accepts (H, W), (H, W, C) or (C, H, W) float arrays."""
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[None]
        elif a.ndim == 3 and a.shape[2] in (1, 3) and a.shape[0] not in (1, 3):
            a = np.moveaxis(a, 2, 0)
        return Image(np.ascontiguousarray(a))


# sRGB <-> CIELab (D65), samples in [0, 1]

_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


def to_cielab(img: Image) -> Image:
    """Convert an sRGB image with samples in [0, 1] to CIE L*a*b* (D65)."""
    if img.channels != 3:
        raise ValueError("to_cielab expects a 3-channel RGB image, got %d channels" % img.channels)
    rgb = img.data
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = np.einsum("ij,jhw->ihw", _RGB2XYZ, lin)
    t = xyz / _D65[:, None, None]
    eps = 216.0 / 24389.0
    kappa = 24389.0 / 27.0
    f = np.where(t > eps, np.cbrt(t), (kappa * t + 16.0) / 116.0)
    L = 116.0 * f[1] - 16.0
    a = 500.0 * (f[0] - f[1])
    b = 200.0 * (f[1] - f[2])
    return Image(np.ascontiguousarray(np.stack([L, a, b])))


@dataclass(frozen=True)
class IntegralGrid:
    """Cumulative sums of per-cell accumulated values.

    cumsum has shape (channels, cell_h + 1, cell_w + 1); cumsum[c, y, x] is the
    sum of all cells with row < y and col < x. Cell (cx, cy) covers pixel
    columns [cx*k, (cx+1)*k) except the last cell in each axis, which extends
    to the image edge.
    """

    factor: int
    width: int
    height: int
    cumsum: np.ndarray

    @property
    def channels(self) -> int:
        return self.cumsum.shape[0]

    @property
    def cell_h(self) -> int:
        return self.cumsum.shape[1] - 1

    @property
    def cell_w(self) -> int:
        return self.cumsum.shape[2] - 1

    def cell_x_bound(self, cx: int) -> int:
        return self.width if cx >= self.cell_w else cx * self.factor

    def cell_y_bound(self, cy: int) -> int:
        return self.height if cy >= self.cell_h else cy * self.factor


def build_integral(src: np.ndarray, factor: int = 1) -> IntegralGrid:
    """Build an integral grid over per-pixel accumulator values.

    src: (H, W) or (C, H, W). factor k >= 1 sub-samples the grid into k x k
    cells; trailing partial cells are merged into the last full cell.
    """
    if factor < 1:
        raise ValueError("sub-sampling factor must be >= 1, got %d" % factor)
    a = np.asarray(src, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError("src must be (H, W) or (C, H, W)")
    c, h, w = a.shape
    cell_w = max(1, w // factor)
    cell_h = max(1, h // factor)
    xb = np.arange(cell_w) * factor
    yb = np.arange(cell_h) * factor
    cells = np.add.reduceat(np.add.reduceat(a, yb, axis=1), xb, axis=2)
    cum = np.zeros((c, cell_h + 1, cell_w + 1), dtype=np.float64)
    cum[:, 1:, 1:] = cells.cumsum(axis=1).cumsum(axis=2)
    return IntegralGrid(factor=factor, width=w, height=h, cumsum=np.ascontiguousarray(cum))


def snap_to_factor(v: int, k: int) -> int:
    """Round v to the nearest multiple of k (half rounds up)."""
    return ((2 * v + k) // (2 * k)) * k


def pixel_to_cell(x: int, k: int, n_cells: int) -> int:
    """Nearest cell boundary for pixel coordinate x, clamped to [0, n_cells]."""
    c = (2 * x + k) // (2 * k)
    return max(0, min(int(c), n_cells))


def rect_sum(
    g: IntegralGrid, anchor: Tuple[int, int], r: Rectangle
) -> Tuple[np.ndarray, Optional[Rectangle]]:
    """Sum of accumulated values inside r placed at anchor, clipped to the image.

    For sub-sampled grids the rectangle offset and size are first rounded to
    the nearest multiple of the factor, then the placement is snapped to the
    cell grid. Returns a per-channel vector and the clipped rectangle actually
    summed (relative to the anchor, in effective pixel coordinates), or None
    if the intersection is empty.
    """
    ax, ay = int(anchor[0]), int(anchor[1])
    k = g.factor
    dx, dy, w, h = r.dx, r.dy, r.w, r.h
    if k > 1:
        dx, dy = snap_to_factor(dx, k), snap_to_factor(dy, k)
        w, h = snap_to_factor(w, k), snap_to_factor(h, k)
    x0, y0 = ax + dx, ay + dy
    x1, y1 = x0 + w, y0 + h
    # clip to the image in pixel space
    x0, x1 = max(0, x0), min(g.width, x1)
    y0, y1 = max(0, y0), min(g.height, y1)
    if x0 >= x1 or y0 >= y1:
        return np.zeros(g.channels), None
    cx0 = pixel_to_cell(x0, k, g.cell_w)
    cx1 = pixel_to_cell(x1, k, g.cell_w)
    cy0 = pixel_to_cell(y0, k, g.cell_h)
    cy1 = pixel_to_cell(y1, k, g.cell_h)
    if cx0 >= cx1 or cy0 >= cy1:
        return np.zeros(g.channels), None
    s = (
        g.cumsum[:, cy1, cx1]
        - g.cumsum[:, cy0, cx1]
        - g.cumsum[:, cy1, cx0]
        + g.cumsum[:, cy0, cx0]
    )
    px0, px1 = g.cell_x_bound(cx0), g.cell_x_bound(cx1)
    py0, py1 = g.cell_y_bound(cy0), g.cell_y_bound(cy1)
    used = Rectangle(dx=px0 - ax, dy=py0 - ay, w=px1 - px0, h=py1 - py0)
    return s, used
