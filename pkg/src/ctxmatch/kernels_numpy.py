"""Pure-NumPy implementations of the hot inner kernels.

These are the fallback path selected by CTXMATCH_BACKEND=numpy; the numba
versions in kernels_numba.py implement identical arithmetic. Everything here
is vectorized over samples / pixels.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_SM_C2 = np.uint64(0xC2B2AE3D27D4EB4F)


def _splitmix64(z):
    z = (z + _SM_GAMMA).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


def _hash_draw(seed, idx, t, which, n):
    """Deterministic pseudo-random draw in [0, n), shared with the numba path."""
    with np.errstate(over="ignore"):  # uint64 wraparound is intentional
        z = (np.uint64(seed) + idx.astype(np.uint64) * _SM_GAMMA
             + np.uint64(3 * t + which + 1) * _SM_C2)
        return (_splitmix64(z) % np.uint64(n)).astype(np.int64)


def _snap(v, k):
    return ((2 * v + k) // (2 * k)) * k


def _ceil_mult(v, k):
    return ((v + k - 1) // k) * k


def feature_batch(cum1, cum2, k, width, height, cell_w, cell_h,
                  dx, dy, rw, rh, x1, y1, x2, y2, absolute):
    """Area-normalized rectangle-sum difference for a batch of anchor pairs.

    cum1/cum2: (cell_h+1, cell_w+1) single-channel cumulative sums of the two
    images (same pixel dimensions). The rectangle is snapped to the grid
    factor, the clipping required by either placement is applied to both
    (crop alignment), and each side is normalized by its own effective pixel
    area.
    """
    x1 = np.asarray(x1, dtype=np.int64)
    y1 = np.asarray(y1, dtype=np.int64)
    x2 = np.asarray(x2, dtype=np.int64)
    y2 = np.asarray(y2, dtype=np.int64)
    n = x1.shape[0]
    if k > 1:
        dx, dy = _snap(dx, k), _snap(dy, k)
        rw, rh = _snap(rw, k), _snap(rh, k)
    if rw <= 0 or rh <= 0:
        return np.zeros(n)
    zero = np.int64(0)
    l1 = _ceil_mult(np.maximum(zero, -(x1 + dx)), k)
    r1 = _ceil_mult(np.maximum(zero, x1 + dx + rw - width), k)
    t1 = _ceil_mult(np.maximum(zero, -(y1 + dy)), k)
    b1 = _ceil_mult(np.maximum(zero, y1 + dy + rh - height), k)
    l2 = _ceil_mult(np.maximum(zero, -(x2 + dx)), k)
    r2 = _ceil_mult(np.maximum(zero, x2 + dx + rw - width), k)
    t2 = _ceil_mult(np.maximum(zero, -(y2 + dy)), k)
    b2 = _ceil_mult(np.maximum(zero, y2 + dy + rh - height), k)
    lc = np.maximum(l1, l2)
    rc = np.maximum(r1, r2)
    tc = np.maximum(t1, t2)
    bc = np.maximum(b1, b2)
    we = rw - lc - rc
    he = rh - tc - bc
    ok = (we > 0) & (he > 0)
    we = np.maximum(we, 0)
    he = np.maximum(he, 0)

    def side(cum, xa, ya):
        xs = xa + dx + lc
        ys = ya + dy + tc
        cx0 = np.clip((2 * xs + k) // (2 * k), 0, cell_w)
        cx1 = np.clip((2 * (xs + we) + k) // (2 * k), cx0, cell_w)
        cy0 = np.clip((2 * ys + k) // (2 * k), 0, cell_h)
        cy1 = np.clip((2 * (ys + he) + k) // (2 * k), cy0, cell_h)
        s = cum[cy1, cx1] - cum[cy0, cx1] - cum[cy1, cx0] + cum[cy0, cx0]
        px0 = np.where(cx0 >= cell_w, width, cx0 * k)
        px1 = np.where(cx1 >= cell_w, width, cx1 * k)
        py0 = np.where(cy0 >= cell_h, height, cy0 * k)
        py1 = np.where(cy1 >= cell_h, height, cy1 * k)
        area = (px1 - px0) * (py1 - py0)
        return np.where(area > 0, s / np.maximum(area, 1), 0.0)

    out = np.where(ok, side(cum1, x1, y1) - side(cum2, x2, y2), 0.0)
    if absolute:
        out = np.abs(out)
    return out


def mean_field_message(q, lab, p1, p2, dvals, inv2_app, inv2_loc, inv2_pln, radius):
    """Pairwise message: msg[y, x, d] = sum_j k_ij sum_d' mu_ij(d, d') q[j, d'].

    q: (H, W, L) marginals; lab: (3, H, W) appearance; p1/p2: (H, W) plane
    coefficients; dvals: (L,) candidate values. Window truncated at `radius`.
    """
    h, w, nl = q.shape
    msg = np.zeros_like(q)
    dd = dvals[None, :] - dvals[:, None]  # dd[d, d'] = dvals[d'] - dvals[d]
    for oy in range(-radius, radius + 1):
        for ox in range(-radius, radius + 1):
            if ox == 0 and oy == 0:
                continue
            ys0, ys1 = max(0, -oy), min(h, h - oy)
            xs0, xs1 = max(0, -ox), min(w, w - ox)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            ci = lab[:, ys0:ys1, xs0:xs1]
            cj = lab[:, ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
            dc2 = ((ci - cj) ** 2).sum(axis=0)
            kw = np.exp(-dc2 * inv2_app - (ox * ox + oy * oy) * inv2_loc)
            shift = p1[ys0:ys1, xs0:xs1] * ox + p2[ys0:ys1, xs0:xs1] * oy
            arg = dd[None, None, :, :] - shift[:, :, None, None]
            mu = np.exp(-(arg * arg) * inv2_pln)
            qj = q[ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
            msg[ys0:ys1, xs0:xs1] += kw[:, :, None] * np.einsum("hwde,hwe->hwd", mu, qj)
    return msg


def _plane_score(p1f, p2f, center_d, nbr_d, nbr_w, nbr_ok, offsets, sigma):
    score = np.zeros_like(center_d)
    for oi in range(offsets.shape[0]):
        ox, oy = offsets[oi]
        res = nbr_d[oi] - center_d - (p1f * ox + p2f * oy)
        score = score + nbr_w[oi] * (nbr_ok[oi] & (np.abs(res) <= sigma))
    return score


def ransac_planes(dexp, valid, lab, inv2_app, inv2_loc, sigma, radius, iters, seed):
    """Per-pixel RANSAC plane fit over a truncated bilateral window.

    Each proposal draws two slope points plus an anchor point (a random valid
    neighbour, or the centre pixel itself, which reproduces the form anchored
    at the centre's own disparity); the two residual equations relative to
    the anchor determine the slopes, and the weighted inlier count is taken
    against the proposal plane's value at the centre. Anchoring away from the
    centre makes the fit robust when the centre's own disparity is an outlier.

    dexp: (H, W) expected disparity; valid: (H, W) bool; lab: (3, H, W).
    Returns (H, W, 2) plane coefficients; pixels with too little support keep
    (0, 0). Deterministic under seed: proposals are drawn with a splitmix64
    hash of (seed, pixel, iteration).
    """
    h, w = dexp.shape
    offsets = np.array(
        [(ox, oy) for oy in range(-radius, radius + 1) for ox in range(-radius, radius + 1)
         if not (ox == 0 and oy == 0)],
        dtype=np.int64,
    )
    n_off = offsets.shape[0]
    yy, xx = np.mgrid[0:h, 0:w]
    # precompute per-offset neighbour disparity, kernel weight, in-bounds+valid
    nbr_d = np.zeros((n_off, h, w))
    nbr_w = np.zeros((n_off, h, w))
    nbr_ok = np.zeros((n_off, h, w), dtype=bool)
    for oi in range(n_off):
        ox, oy = offsets[oi]
        ys0, ys1 = max(0, -oy), min(h, h - oy)
        xs0, xs1 = max(0, -ox), min(w, w - ox)
        if ys0 >= ys1 or xs0 >= xs1:
            continue
        ci = lab[:, ys0:ys1, xs0:xs1]
        cj = lab[:, ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
        dc2 = ((ci - cj) ** 2).sum(axis=0)
        nbr_w[oi, ys0:ys1, xs0:xs1] = np.exp(-dc2 * inv2_app - (ox * ox + oy * oy) * inv2_loc)
        nbr_d[oi, ys0:ys1, xs0:xs1] = dexp[ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
        nbr_ok[oi, ys0:ys1, xs0:xs1] = valid[ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
    pix = (yy * w + xx).astype(np.uint64)
    best_p1 = np.zeros((h, w))
    best_p2 = np.zeros((h, w))
    best_score = _plane_score(best_p1, best_p2, dexp, nbr_d, nbr_w, nbr_ok, offsets, sigma)
    flat = np.arange(h * w)
    nbr_d_f = nbr_d.reshape(n_off, -1)
    nbr_ok_f = nbr_ok.reshape(n_off, -1)
    for t in range(iters):
        o1 = _hash_draw(seed, pix, t, 0, n_off)
        o2 = _hash_draw(seed, pix, t, 1, n_off)
        o3 = _hash_draw(seed, pix, t, 2, n_off + 1)  # n_off selects the centre
        d1 = nbr_d_f[o1.ravel(), flat].reshape(h, w)
        d2 = nbr_d_f[o2.ravel(), flat].reshape(h, w)
        ok1 = nbr_ok_f[o1.ravel(), flat].reshape(h, w)
        ok2 = nbr_ok_f[o2.ravel(), flat].reshape(h, w)
        center = o3 == n_off
        o3c = np.minimum(o3, n_off - 1)
        ad = np.where(center, dexp, nbr_d_f[o3c.ravel(), flat].reshape(h, w))
        ok3 = center | nbr_ok_f[o3c.ravel(), flat].reshape(h, w)
        ax = np.where(center, 0, offsets[o3c, 0]).astype(np.float64)
        ay = np.where(center, 0, offsets[o3c, 1]).astype(np.float64)
        a11 = offsets[o1, 0].astype(np.float64) - ax
        a12 = offsets[o1, 1].astype(np.float64) - ay
        a21 = offsets[o2, 0].astype(np.float64) - ax
        a22 = offsets[o2, 1].astype(np.float64) - ay
        det = a11 * a22 - a12 * a21
        usable = ok1 & ok2 & ok3 & valid & (np.abs(det) > 1e-12) & (o1 != o2)
        det_safe = np.where(usable, det, 1.0)
        r1 = d1 - ad
        r2 = d2 - ad
        p1f = (r1 * a22 - r2 * a12) / det_safe
        p2f = (a11 * r2 - a21 * r1) / det_safe
        p1f = np.where(usable, p1f, 0.0)
        p2f = np.where(usable, p2f, 0.0)
        center_d = ad - (p1f * ax + p2f * ay)  # proposal plane value at the centre
        score = _plane_score(p1f, p2f, center_d, nbr_d, nbr_w, nbr_ok, offsets, sigma)
        better = usable & (score > best_score)
        best_p1 = np.where(better, p1f, best_p1)
        best_p2 = np.where(better, p2f, best_p2)
        best_score = np.where(better, score, best_score)
    out = np.stack([best_p1, best_p2], axis=-1)
    out[~valid] = 0.0
    return out
