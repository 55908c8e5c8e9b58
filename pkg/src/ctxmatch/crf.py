"""Fully-connected CRF regularization with a local-planarity compatibility.

The pairwise sum is truncated at a spatial radius (the bilateral kernel is
negligible beyond ~3 location widths). Each iteration fits a plane per pixel
with RANSAC on the current expected disparities, then applies one synchronous
mean-field update of the per-pixel marginals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ctxmatch.backend import get_kernels
from ctxmatch.grid import Image, to_cielab
from ctxmatch.matcher import LabelMap, ScoreVolume, winner_take_all


@dataclass(frozen=True)
class CrfConfig:
    sigma_app: float = 8.0    # appearance kernel width (Lab units)
    sigma_loc: float = 21.0   # location kernel width (px)
    sigma_pln: float = 1.5    # plane compatibility width (px)
    sigma: float = 1.0        # RANSAC inlier threshold (px)
    pairwise_weight: float = 1.0
    max_iters: int = 20
    ransac_iters: int = 64
    radius: Optional[int] = None  # pairwise truncation; default 3 * sigma_loc

    def __post_init__(self):
        if min(self.sigma_app, self.sigma_loc, self.sigma_pln) <= 0:
            raise ValueError("kernel widths must be positive")
        if self.radius is not None and self.radius < 1:
            raise ValueError("truncation radius must be >= 1")

    @property
    def effective_radius(self) -> int:
        if self.radius is not None:
            return self.radius
        return max(1, int(round(3.0 * self.sigma_loc)))


def pairwise_kernel(ci: np.ndarray, cj: np.ndarray,
                    xi: Tuple[float, float], xj: Tuple[float, float],
                    cfg: CrfConfig) -> float:
    """Bilateral Gaussian exp(-|Ci-Cj|^2 / 2 s_app^2 - |xi-xj|^2 / 2 s_loc^2)."""
    dc2 = float(((np.asarray(ci) - np.asarray(cj)) ** 2).sum())
    dx2 = float((xi[0] - xj[0]) ** 2 + (xi[1] - xj[1]) ** 2)
    return float(np.exp(-dc2 / (2.0 * cfg.sigma_app ** 2) - dx2 / (2.0 * cfg.sigma_loc ** 2)))


def plane_compatibility(d_i: float, d_j: float, p_i: Tuple[float, float],
                        x_i: Tuple[float, float], x_j: Tuple[float, float],
                        sigma_pln: float) -> float:
    """Similarity peaking at 1 when d_j agrees with the plane anchored at i:
    exp(-(d_j - d_i - p_i . (x_j - x_i))^2 / 2 s_pln^2)."""
    res = d_j - d_i - (p_i[0] * (x_j[0] - x_i[0]) + p_i[1] * (x_j[1] - x_i[1]))
    return float(np.exp(-(res * res) / (2.0 * sigma_pln ** 2)))


def ransac_fit_planes(disp: np.ndarray, valid: np.ndarray, lab: np.ndarray,
                      cfg: CrfConfig, seed: int) -> np.ndarray:
    """Per-pixel plane coefficients from 2-point RANSAC proposals scored by
    bilateral-weighted inlier counts over the truncated window. Pixels with
    fewer than 2 usable neighbours keep (0, 0)."""
    kern = get_kernels()
    return kern.ransac_planes(
        np.ascontiguousarray(disp, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=bool),
        np.ascontiguousarray(lab, dtype=np.float64),
        1.0 / (2.0 * cfg.sigma_app ** 2),
        1.0 / (2.0 * cfg.sigma_loc ** 2),
        cfg.sigma,
        cfg.effective_radius,
        cfg.ransac_iters,
        seed,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=2, keepdims=True)
    finite = np.isfinite(m)
    z = np.exp(np.where(finite, logits - np.where(finite, m, 0.0), -np.inf))
    z = np.where(np.isfinite(logits), z, 0.0)
    s = z.sum(axis=2, keepdims=True)
    n = logits.shape[2]
    return np.where(s > 0, z / np.maximum(s, 1e-300), 1.0 / n)


def mean_field_step(q: np.ndarray, unary: np.ndarray, planes: np.ndarray,
                    lab: np.ndarray, dvals: np.ndarray, cfg: CrfConfig) -> np.ndarray:
    """One synchronous marginal update:
    Q_i(d) proportional to exp(unary_i(d) + w * sum_j k_ij sum_d' mu_ij(d,d') Q_j(d'))."""
    if cfg.pairwise_weight != 0.0:
        kern = get_kernels()
        msg = kern.mean_field_message(
            np.ascontiguousarray(q, dtype=np.float64),
            np.ascontiguousarray(lab, dtype=np.float64),
            np.ascontiguousarray(planes[:, :, 0], dtype=np.float64),
            np.ascontiguousarray(planes[:, :, 1], dtype=np.float64),
            np.ascontiguousarray(dvals, dtype=np.float64),
            1.0 / (2.0 * cfg.sigma_app ** 2),
            1.0 / (2.0 * cfg.sigma_loc ** 2),
            1.0 / (2.0 * cfg.sigma_pln ** 2),
            cfg.effective_radius,
        )
        logits = unary + cfg.pairwise_weight * msg
    else:
        logits = unary
    out = _softmax(logits)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("non-finite marginals in mean-field update")
    return out


def regularize(volume: ScoreVolume, image: Image, cfg: CrfConfig, seed: int = 0,
               valid_mask: Optional[np.ndarray] = None,
               tv_tol: float = 1e-3) -> LabelMap:
    """Iterate (RANSAC plane fit on expected disparities -> mean-field update)
    from the softmax of the score volume; stops early when the largest
    per-pixel total-variation change of the marginals drops below tv_tol.

    Pixels flagged invalid by inverse validation (valid_mask False) get
    uniform unaries over their in-bounds candidates.
    """
    if volume.kind != "stereo":
        raise ValueError("regularization is wired for stereo volumes")
    if cfg.max_iters == 0:
        return winner_take_all(volume)
    dvals = -volume.candidates[:, 0].astype(np.float64)
    unary = volume.scores.copy()
    if valid_mask is not None:
        ignored = ~valid_mask
        flat = np.where(np.isfinite(unary), 0.0, -np.inf)
        unary[ignored] = flat[ignored]
    lab = to_cielab(image).data if image.channels == 3 else image.data
    q = _softmax(unary)
    has_candidate = np.isfinite(volume.scores.max(axis=2))
    support = has_candidate if valid_mask is None else (has_candidate & valid_mask)
    for it in range(cfg.max_iters):
        dexp = (q * dvals[None, None, :]).sum(axis=2)
        planes = ransac_fit_planes(dexp, support, lab, cfg, seed + it)
        q_new = mean_field_step(q, unary, planes, lab, dvals, cfg)
        tv = 0.5 * np.abs(q_new - q).sum(axis=2).max()
        q = q_new
        if tv < tv_tol:
            break
    idx = np.argmax(q, axis=2).astype(np.int32)
    return LabelMap(kind=volume.kind, candidates=volume.candidates,
                    candidate_index=np.where(has_candidate, idx, 0), valid=has_candidate)
