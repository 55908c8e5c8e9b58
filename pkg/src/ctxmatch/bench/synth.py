"""Synthetic pairs with exactly known ground truth, for desk-scale training
and verification."""

from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from ctxmatch.data import ChangeMask, DatasetPair, DisparityMap, FlowField
from ctxmatch.grid import Image


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Multi-scale random texture, channels-last in [0.05, 0.95]."""
    img = np.zeros((h, w, 3))
    for sigma, amp in ((6.0, 1.0), (2.5, 0.7), (1.0, 0.45)):
        layer = gaussian_filter(rng.standard_normal((h, w, 3)), (sigma, sigma, 0))
        sd = layer.std()
        img += amp * layer / (sd if sd > 0 else 1.0)
    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)


def shift_stereo(h: int, w: int, shift: int, seed: int) -> DatasetPair:
    """Constant-disparity pair cropped from one texture; gt = shift, valid
    where the match stays inside the second image."""
    rng = np.random.default_rng(seed)
    base = _texture(rng, h, w + shift)
    # I1[x] = base[x] matches I2[x - shift] = base[x]: x2 = x1 - shift
    im1 = Image.from_array(base[:, :w])
    im2 = Image.from_array(base[:, shift:w + shift])
    gt = np.full((h, w), float(shift))
    valid = np.zeros((h, w), dtype=bool)
    valid[:, shift:] = True
    return DatasetPair(image1=im1, image2=im2,
                       ground_truth=DisparityMap(values=gt, valid=valid))


def plane_scene(h: int, w: int, p: Tuple[float, float] = (0.5, -0.25),
                offset: float = 8.0, seed: int = 0,
                outlier_frac: float = 0.0, outlier_mag: float = 6.0) -> DatasetPair:
    """Planar disparity field d(x, y) = p[0] x + p[1] y + offset with an
    optional fraction of gross outliers; uniform-texture images."""
    rng = np.random.default_rng(seed)
    tex = _texture(rng, h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    d = p[0] * xx + p[1] * yy + offset
    if outlier_frac > 0:
        hit = rng.random((h, w)) < outlier_frac
        d = d + np.where(hit, rng.uniform(-outlier_mag, outlier_mag, (h, w)), 0.0)
    img = Image.from_array(tex)
    return DatasetPair(image1=img, image2=img,
                       ground_truth=DisparityMap(values=d, valid=np.ones((h, w), dtype=bool)))


def two_plane(h: int, w: int, pa: Tuple[float, float] = (0.3, 0.0),
              pb: Tuple[float, float] = (-0.3, 0.1), seed: int = 0) -> DatasetPair:
    """Two planar halves split at the vertical midline, with a strong colour
    edge on the boundary so the appearance kernel separates their support."""
    rng = np.random.default_rng(seed)
    tex = _texture(rng, h, w)
    half = w // 2
    tex[:, :half, 0] = np.clip(tex[:, :half, 0] + 0.5, 0, 1)   # reddish left
    tex[:, half:, 2] = np.clip(tex[:, half:, 2] + 0.5, 0, 1)   # bluish right
    yy, xx = np.mgrid[0:h, 0:w]
    da = pa[0] * xx + pa[1] * yy + 6.0
    db = pb[0] * (xx - half) + pb[1] * yy + 20.0
    d = np.where(xx < half, da, db)
    img = Image.from_array(tex)
    return DatasetPair(image1=img, image2=img,
                       ground_truth=DisparityMap(values=d, valid=np.ones((h, w), dtype=bool)))


def flow_shift(h: int, w: int, shift: Tuple[int, int], seed: int) -> DatasetPair:
    """Constant-flow pair: image 2 is image 1 translated by (sx, sy)."""
    sx, sy = shift
    rng = np.random.default_rng(seed)
    base = _texture(rng, h + abs(sy), w + abs(sx))
    x0, y0 = max(sx, 0), max(sy, 0)
    im1 = base[y0:y0 + h, x0:x0 + w]
    im2 = base[y0 - sy:y0 - sy + h, x0 - sx:x0 - sx + w]
    yy, xx = np.mgrid[0:h, 0:w]
    valid = (xx + sx >= 0) & (xx + sx < w) & (yy + sy >= 0) & (yy + sy < h)
    gt = np.empty((h, w, 2))
    gt[:, :, 0] = sx
    gt[:, :, 1] = sy
    return DatasetPair(image1=Image.from_array(im1), image2=Image.from_array(im2),
                       ground_truth=FlowField(values=gt, valid=valid))


def change_paste(h: int, w: int, seed: int, block: int = 16,
                 gain: float = 1.0, color_shift: Tuple[float, float, float] = (0.0, 0.0, 0.0),
                 n_blocks: int = 1) -> DatasetPair:
    """Aligned pair: image 2 is image 1 under a global gain and per-channel
    colour shift, with textured blocks pasted in; the blocks are the change."""
    rng = np.random.default_rng(seed)
    tex1 = _texture(rng, h, w)
    tex2 = np.clip(tex1 * gain + np.asarray(color_shift)[None, None, :], 0.0, 1.0)
    mask = np.zeros((h, w), dtype=bool)
    for _ in range(n_blocks):
        by = int(rng.integers(0, max(1, h - block)))
        bx = int(rng.integers(0, max(1, w - block)))
        patch = _texture(rng, block, block)
        tex2[by:by + block, bx:bx + block] = patch
        mask[by:by + block, bx:bx + block] = True
    return DatasetPair(image1=Image.from_array(tex1), image2=Image.from_array(tex2),
                       ground_truth=ChangeMask(values=mask, valid=np.ones((h, w), dtype=bool)))


def synth_generate(kind: str, seed: int = 0, **params) -> DatasetPair:
    """Dispatch by kind: shift-stereo, plane-scene, two-plane, flow-shift,
    change-paste."""
    if kind == "shift-stereo":
        return shift_stereo(params.get("height", 64), params.get("width", 96),
                            params.get("shift", 5), seed)
    if kind == "plane-scene":
        return plane_scene(params.get("height", 48), params.get("width", 64),
                           tuple(params.get("p", (0.5, -0.25))),
                           params.get("offset", 8.0), seed,
                           params.get("outlier_frac", 0.0), params.get("outlier_mag", 6.0))
    if kind == "two-plane":
        return two_plane(params.get("height", 48), params.get("width", 64),
                         tuple(params.get("pa", (0.3, 0.0))),
                         tuple(params.get("pb", (-0.3, 0.1))), seed)
    if kind == "flow-shift":
        return flow_shift(params.get("height", 64), params.get("width", 96),
                          tuple(params.get("shift", (3, -2))), seed)
    if kind == "change-paste":
        return change_paste(params.get("height", 64), params.get("width", 96), seed,
                            params.get("block", 16), params.get("gain", 1.0),
                            tuple(params.get("color_shift", (0.0, 0.0, 0.0))),
                            params.get("n_blocks", 1))
    raise ValueError("unknown synthetic kind %r" % kind)
