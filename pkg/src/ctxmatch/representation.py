"""Contextual feature representation.

An image is represented by sub-sampled bag-of-words integral grids (one
channel per visual word, factor 4 by default) plus a full-resolution integral
grid of the 17-dim filter-bank responses. Single dimensions of the difference
of two representations are evaluated on demand from the integral grids, after
aligning the boundary cropping of both rectangle placements.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ctxmatch import features
from ctxmatch.backend import get_kernels
from ctxmatch.codebook import Codebook, assignment_maps, soft_assign
from ctxmatch.grid import Image, IntegralGrid, Rectangle, build_integral, to_cielab

AVERAGE_FAMILY = "average"
DEFAULT_BOW_FACTOR = 4


@dataclass(frozen=True)
class RectangleSet:
    rects: Tuple[Rectangle, ...]
    seed: int
    max_extent: int

    def __len__(self) -> int:
        return len(self.rects)


def sample_rectangles(seed: int, count: int = 200, max_extent: int = 100) -> RectangleSet:
    """Fixed random rectangle context geometry.

    Offsets are uniform integers in [-max_extent, max_extent]; widths and
    heights are log-uniform in [1, max_extent]. The first rectangle is always
    the 1x1 rectangle at offset (0, 0), so one pixel-precise dimension exists.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    rects = [Rectangle(0, 0, 1, 1)]
    log_max = np.log(max(max_extent, 1))
    for _ in range(count - 1):
        dx = int(rng.integers(-max_extent, max_extent + 1))
        dy = int(rng.integers(-max_extent, max_extent + 1))
        w = int(np.clip(round(np.exp(rng.uniform(0.0, log_max))), 1, max_extent))
        h = int(np.clip(round(np.exp(rng.uniform(0.0, log_max))), 1, max_extent))
        rects.append(Rectangle(dx, dy, w, h))
    return RectangleSet(rects=tuple(rects), seed=seed, max_extent=max_extent)


@dataclass(frozen=True)
class FeatureIndex:
    rect_index: int
    family: int  # index into the representation's family list; last = average
    channel: int


@dataclass(frozen=True)
class ImageRepresentation:
    width: int
    height: int
    families: Tuple[str, ...]  # bow family names + AVERAGE_FAMILY last
    grids: Dict[str, IntegralGrid]

    def grid_for(self, family: int) -> IntegralGrid:
        return self.grids[self.families[family]]

    @property
    def family_channels(self) -> Tuple[int, ...]:
        return tuple(self.grids[f].channels for f in self.families)


def family_layout(family_channels: Tuple[int, ...]) -> Tuple[int, Tuple[int, ...]]:
    """(dims per rectangle, channel offset of each family)."""
    offs = []
    total = 0
    for c in family_channels:
        offs.append(total)
        total += c
    return total, tuple(offs)


def total_dimensionality(family_channels: Tuple[int, ...], n_rects: int) -> int:
    return sum(family_channels) * n_rects


def decode_index(flat: int, family_channels: Tuple[int, ...]) -> FeatureIndex:
    per_rect, offs = family_layout(family_channels)
    rect_index, rem = divmod(flat, per_rect)
    for fam in range(len(family_channels) - 1, -1, -1):
        if rem >= offs[fam]:
            return FeatureIndex(rect_index=rect_index, family=fam, channel=rem - offs[fam])
    raise AssertionError


def encode_index(idx: FeatureIndex, family_channels: Tuple[int, ...]) -> int:
    per_rect, offs = family_layout(family_channels)
    return idx.rect_index * per_rect + offs[idx.family] + idx.channel


def build_representation(
    img: Image,
    codebooks: Dict[str, Codebook],
    bow_families: Tuple[str, ...],
    descriptor_params: Optional[Dict[str, dict]] = None,
    bow_factor: int = DEFAULT_BOW_FACTOR,
) -> ImageRepresentation:
    """Soft-assignment bag-of-words integral grids (sub-sampled) plus the
    full-resolution average filter-bank grid."""
    descriptor_params = descriptor_params or {}
    lab = to_cielab(img)
    fb = features.filter_bank_17(lab)
    grids: Dict[str, IntegralGrid] = {}
    for fam in bow_families:
        if fam not in codebooks:
            raise ValueError("no codebook for configured family %r" % fam)
        if fam == "texton":
            fld = fb
        else:
            fld = features.dense_descriptor(lab, fam, **descriptor_params.get(fam, {}))
        sa = soft_assign(fld, codebooks[fam])
        grids[fam] = build_integral(assignment_maps(sa), factor=bow_factor)
    grids[AVERAGE_FAMILY] = build_integral(np.moveaxis(fb.data, 2, 0), factor=1)
    fams = tuple(bow_families) + (AVERAGE_FAMILY,)
    return ImageRepresentation(width=img.width, height=img.height, families=fams, grids=grids)


def crop_align(
    r: Rectangle,
    anchor1: Tuple[int, int],
    anchor2: Tuple[int, int],
    dims1: Tuple[int, int],
    dims2: Tuple[int, int],
) -> Tuple[Optional[Rectangle], Optional[Rectangle]]:
    """Apply the union of the boundary clipping both placements require, so
    both effective rectangles keep an identical shape relative to their
    anchors. dims are (width, height). Returns (None, None) when the aligned
    rectangle is fully clipped away."""
    def clips(anchor, dims):
        ax, ay = anchor
        w, h = dims
        return (
            max(0, -(ax + r.dx)),
            max(0, ax + r.dx + r.w - w),
            max(0, -(ay + r.dy)),
            max(0, ay + r.dy + r.h - h),
        )

    l1, r1, t1, b1 = clips(anchor1, dims1)
    l2, r2, t2, b2 = clips(anchor2, dims2)
    lc, rc = max(l1, l2), max(r1, r2)
    tc, bc = max(t1, t2), max(b1, b2)
    w = r.w - lc - rc
    h = r.h - tc - bc
    if w <= 0 or h <= 0:
        return None, None
    out = Rectangle(dx=r.dx + lc, dy=r.dy + tc, w=w, h=h)
    return out, out


def feature_values(
    rep1: ImageRepresentation,
    rep2: ImageRepresentation,
    x1: np.ndarray,
    y1: np.ndarray,
    x2: np.ndarray,
    y2: np.ndarray,
    rect: Rectangle,
    family: int,
    channel: int,
    absolute: bool = False,
) -> np.ndarray:
    """One dimension of the representation difference for a batch of anchor
    pairs. Hot path: dispatches to the selected kernel backend."""
    g1 = rep1.grid_for(family)
    g2 = rep2.grid_for(family)
    if (g1.width, g1.height) != (g2.width, g2.height):
        raise ValueError("representation pair must cover same-size images")
    kern = get_kernels()
    return kern.feature_batch(
        g1.cumsum[channel], g2.cumsum[channel],
        g1.factor, g1.width, g1.height, g1.cell_w, g1.cell_h,
        rect.dx, rect.dy, rect.w, rect.h,
        np.ascontiguousarray(x1, dtype=np.int64), np.ascontiguousarray(y1, dtype=np.int64),
        np.ascontiguousarray(x2, dtype=np.int64), np.ascontiguousarray(y2, dtype=np.int64),
        absolute,
    )


def feature_diff(
    rep1: ImageRepresentation,
    rep2: ImageRepresentation,
    x1: Tuple[int, int],
    x2: Tuple[int, int],
    rects: RectangleSet,
    idx: FeatureIndex,
    absolute: bool = False,
) -> float:
    """Scalar convenience wrapper around feature_values."""
    v = feature_values(
        rep1, rep2,
        np.array([x1[0]]), np.array([x1[1]]),
        np.array([x2[0]]), np.array([x2[1]]),
        rects.rects[idx.rect_index], idx.family, idx.channel, absolute,
    )
    return float(v[0])
