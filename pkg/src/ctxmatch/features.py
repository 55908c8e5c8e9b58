"""Dense per-pixel descriptors.

Four families: the 17-dimensional filter-bank (texton) response, dense
SIFT-like gradient histograms, local quantized ternary patterns, and
self-similarity correlation descriptors. All are computed for every pixel
with reflective boundary handling, so interior descriptors are translation
equivariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_laplace, uniform_filter

from ctxmatch.grid import Image

FILTER_BANK_DIM = 17

# lqtp neighbour order: row-major 8-neighbourhood excluding the center
LQTP_OFFSETS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


@dataclass(frozen=True)
class DescriptorField:
    """Per-pixel descriptors, data shape (height, width, dim)."""

    kind: str
    data: np.ndarray

    @property
    def dim(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def filter_bank_17(img: Image) -> DescriptorField:
    """17-dim filter bank on a CIELab image.

    Gaussians at scales {1,2,4} on L,a,b (9), Laplacian-of-Gaussian at scales
    {1,2,4,8} on L (4), and x/y Gaussian derivatives at scales {2,4} on L (4).
    """
    if img.channels != 3:
        raise ValueError("filter_bank_17 expects a 3-channel Lab image")
    L = img.data[0]
    responses = []
    for sigma in (1.0, 2.0, 4.0):
        for ch in range(3):
            responses.append(gaussian_filter(img.data[ch], sigma, mode="reflect"))
    for sigma in (1.0, 2.0, 4.0, 8.0):
        # the discrete LoG kernel does not sum exactly to zero; remove the
        # residual DC gain so constants produce exactly zero response
        dc = float(gaussian_laplace(np.ones((1, 1)), sigma, mode="reflect")[0, 0])
        responses.append(gaussian_laplace(L, sigma, mode="reflect") - dc * L)
    for sigma in (2.0, 4.0):
        responses.append(gaussian_filter(L, sigma, order=(0, 1), mode="reflect"))  # d/dx
        responses.append(gaussian_filter(L, sigma, order=(1, 0), mode="reflect"))  # d/dy
    data = np.ascontiguousarray(np.stack(responses, axis=-1))
    return DescriptorField(kind="texton", data=data)


def _gray(img: Image) -> np.ndarray:
    # Lab input: use lightness normalized to [0, 1]
    if img.channels == 1:
        return img.data[0]
    return img.data[0] / 100.0


def dense_sift(img: Image, patch: int = 16, cells: int = 4, orientations: int = 8) -> DescriptorField:
    """SIFT-like per-pixel descriptor: cells x cells spatial bins of
    orientation histograms over a patch, L2-normalized, clamped at 0.2 and
    renormalized."""
    g = _gray(img)
    h, w = g.shape
    half = patch // 2
    cell = patch // cells
    pad = half + 1
    gp = np.pad(g, pad, mode="reflect")
    gy, gx = np.gradient(gp)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    obin = np.minimum((ang / (2.0 * np.pi / orientations)).astype(np.int64), orientations - 1)
    hp, wp = gp.shape
    desc = np.empty((h, w, cells * cells * orientations))
    for b in range(orientations):
        layer = np.where(obin == b, mag, 0.0)
        cum = np.zeros((hp + 1, wp + 1))
        cum[1:, 1:] = layer.cumsum(axis=0).cumsum(axis=1)
        for cy in range(cells):
            for cx in range(cells):
                y0 = pad - half + cy * cell
                x0 = pad - half + cx * cell
                s = (
                    cum[y0 + cell:y0 + cell + h, x0 + cell:x0 + cell + w]
                    - cum[y0:y0 + h, x0 + cell:x0 + cell + w]
                    - cum[y0 + cell:y0 + cell + h, x0:x0 + w]
                    + cum[y0:y0 + h, x0:x0 + w]
                )
                # integral-image cancellation can leave tiny negatives
                desc[:, :, (cy * cells + cx) * orientations + b] = np.maximum(s, 0.0)
    norm = np.linalg.norm(desc, axis=2, keepdims=True)
    desc = np.where(norm > 0, desc / np.maximum(norm, 1e-300), 0.0)
    desc = np.minimum(desc, 0.2)
    norm = np.linalg.norm(desc, axis=2, keepdims=True)
    desc = np.where(norm > 0, desc / np.maximum(norm, 1e-300), 0.0)
    return DescriptorField(kind="sift", data=np.ascontiguousarray(desc))


def lqtp_code(neigh: np.ndarray, center: np.ndarray, tau: float) -> np.ndarray:
    """Ternary code of 8 neighbour comparisons, base-3 packed in LQTP_OFFSETS order."""
    code = np.zeros(center.shape, dtype=np.int64)
    p3 = 1
    for i in range(neigh.shape[0]):
        d = neigh[i] - center
        t = np.where(d > tau, 2, np.where(d < -tau, 0, 1))
        code += t * p3
        p3 *= 3
    return code


def lqtp(img: Image, tau: float = 0.02, dim: int = 32, window: int = 9) -> DescriptorField:
    """Local quantized ternary patterns: the packed ternary 8-neighbourhood
    code is hashed into `dim` bins and histogrammed over a local window."""
    g = _gray(img)
    h, w = g.shape
    gp = np.pad(g, 1, mode="reflect")
    neigh = np.stack([gp[1 + oy:1 + oy + h, 1 + ox:1 + ox + w] for ox, oy in LQTP_OFFSETS])
    code = lqtp_code(neigh, g, tau) % dim
    desc = np.empty((h, w, dim))
    for b in range(dim):
        onehot = (code == b).astype(np.float64)
        desc[:, :, b] = uniform_filter(onehot, size=window, mode="reflect")
    return DescriptorField(kind="lqtp", data=np.ascontiguousarray(desc))


def selfsim_offsets(radius: int = 5, radial: int = 3, angular: int = 10):
    """Log-polar sampling offsets: one representative offset per bin."""
    offs = []
    for i in range(radial):
        r = radius ** ((i + 1) / radial)
        for j in range(angular):
            th = 2.0 * np.pi * j / angular
            offs.append((int(round(r * np.cos(th))), int(round(r * np.sin(th)))))
    return offs


def self_similarity(img: Image, patch: int = 5, radius: int = 5, radial: int = 3,
                    angular: int = 10, bandwidth: float = 0.25) -> DescriptorField:
    """Self-similarity of a small central patch against a log-polar sampled
    surrounding window: s(o) = exp(-SSD(o) / (patch_area * bandwidth^2))."""
    g = _gray(img)
    h, w = g.shape
    hp = patch // 2
    pad = 2 * (radius + hp)
    G = np.pad(g, pad, mode="reflect")
    offs = selfsim_offsets(radius, radial, angular)
    desc = np.empty((h, w, len(offs)))
    area = float(patch * patch)
    scale = 1.0 / (area * bandwidth * bandwidth)
    c0 = pad
    for di, (ox, oy) in enumerate(offs):
        a = G[c0 - hp:c0 + h + hp, c0 - hp:c0 + w + hp]
        b = G[c0 - hp + oy:c0 + h + hp + oy, c0 - hp + ox:c0 + w + hp + ox]
        e = (a - b) ** 2
        ssd = uniform_filter(e, size=patch, mode="constant")[hp:hp + h, hp:hp + w] * area
        desc[:, :, di] = np.exp(-ssd * scale)
    return DescriptorField(kind="selfsim", data=np.ascontiguousarray(desc))


def dense_descriptor(img: Image, kind: str, **params) -> DescriptorField:
    """Dispatch on descriptor family name."""
    if kind == "texton":
        return filter_bank_17(img)
    if kind == "sift":
        return dense_sift(img, **params)
    if kind == "lqtp":
        return lqtp(img, **params)
    if kind == "selfsim":
        return self_similarity(img, **params)
    raise ValueError("unknown descriptor kind %r" % kind)
