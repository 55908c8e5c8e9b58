"""Numba-compiled implementations of the hot inner kernels.

Arithmetic mirrors kernels_numpy.py; results agree to floating-point noise
(the RANSAC proposal draws are bit-identical by construction).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

NAME = "numba"

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_SM_C2 = np.uint64(0xC2B2AE3D27D4EB4F)


@njit(cache=True, inline="always")
def _splitmix64(z):
    z = z + _SM_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _hash_draw(seed, idx, t, which, n):
    z = np.uint64(seed) + np.uint64(idx) * _SM_GAMMA + np.uint64(3 * t + which + 1) * _SM_C2
    return int(_splitmix64(z) % np.uint64(n))


@njit(cache=True, inline="always")
def _snap(v, k):
    return ((2 * v + k) // (2 * k)) * k


@njit(cache=True, inline="always")
def _ceil_mult(v, k):
    return ((v + k - 1) // k) * k


@njit(cache=True, inline="always")
def _side_density(cum, xa, ya, dx, dy, lc, tc, we, he, k, width, height, cell_w, cell_h):
    xs = xa + dx + lc
    ys = ya + dy + tc
    cx0 = (2 * xs + k) // (2 * k)
    if cx0 < 0:
        cx0 = 0
    if cx0 > cell_w:
        cx0 = cell_w
    cx1 = (2 * (xs + we) + k) // (2 * k)
    if cx1 < cx0:
        cx1 = cx0
    if cx1 > cell_w:
        cx1 = cell_w
    cy0 = (2 * ys + k) // (2 * k)
    if cy0 < 0:
        cy0 = 0
    if cy0 > cell_h:
        cy0 = cell_h
    cy1 = (2 * (ys + he) + k) // (2 * k)
    if cy1 < cy0:
        cy1 = cy0
    if cy1 > cell_h:
        cy1 = cell_h
    s = cum[cy1, cx1] - cum[cy0, cx1] - cum[cy1, cx0] + cum[cy0, cx0]
    px0 = width if cx0 >= cell_w else cx0 * k
    px1 = width if cx1 >= cell_w else cx1 * k
    py0 = height if cy0 >= cell_h else cy0 * k
    py1 = height if cy1 >= cell_h else cy1 * k
    area = (px1 - px0) * (py1 - py0)
    if area <= 0:
        return 0.0
    return s / area


@njit(cache=True, parallel=True)
def feature_batch(cum1, cum2, k, width, height, cell_w, cell_h,
                  dx, dy, rw, rh, x1, y1, x2, y2, absolute):
    n = x1.shape[0]
    out = np.zeros(n)
    if k > 1:
        dx, dy = _snap(dx, k), _snap(dy, k)
        rw, rh = _snap(rw, k), _snap(rh, k)
    if rw <= 0 or rh <= 0:
        return out
    for i in prange(n):
        a1, b1 = x1[i], y1[i]
        a2, b2 = x2[i], y2[i]
        l1 = _ceil_mult(max(0, -(a1 + dx)), k)
        r1 = _ceil_mult(max(0, a1 + dx + rw - width), k)
        t1 = _ceil_mult(max(0, -(b1 + dy)), k)
        bo1 = _ceil_mult(max(0, b1 + dy + rh - height), k)
        l2 = _ceil_mult(max(0, -(a2 + dx)), k)
        r2 = _ceil_mult(max(0, a2 + dx + rw - width), k)
        t2 = _ceil_mult(max(0, -(b2 + dy)), k)
        bo2 = _ceil_mult(max(0, b2 + dy + rh - height), k)
        lc = max(l1, l2)
        rc = max(r1, r2)
        tc = max(t1, t2)
        bc = max(bo1, bo2)
        we = rw - lc - rc
        he = rh - tc - bc
        if we <= 0 or he <= 0:
            out[i] = 0.0
            continue
        v1 = _side_density(cum1, a1, b1, dx, dy, lc, tc, we, he, k, width, height, cell_w, cell_h)
        v2 = _side_density(cum2, a2, b2, dx, dy, lc, tc, we, he, k, width, height, cell_w, cell_h)
        v = v1 - v2
        out[i] = abs(v) if absolute else v
    return out


@njit(cache=True, parallel=True)
def mean_field_message(q, lab, p1, p2, dvals, inv2_app, inv2_loc, inv2_pln, radius):
    h, w, nl = q.shape
    msg = np.zeros_like(q)
    for pix in prange(h * w):
        y = pix // w
        x = pix % w
        for oy in range(-radius, radius + 1):
            yj = y + oy
            if yj < 0 or yj >= h:
                continue
            for ox in range(-radius, radius + 1):
                if ox == 0 and oy == 0:
                    continue
                xj = x + ox
                if xj < 0 or xj >= w:
                    continue
                dc2 = 0.0
                for c in range(lab.shape[0]):
                    dcc = lab[c, y, x] - lab[c, yj, xj]
                    dc2 += dcc * dcc
                kw = np.exp(-dc2 * inv2_app - (ox * ox + oy * oy) * inv2_loc)
                shift = p1[y, x] * ox + p2[y, x] * oy
                for d in range(nl):
                    acc = 0.0
                    for e in range(nl):
                        arg = dvals[e] - dvals[d] - shift
                        acc += np.exp(-(arg * arg) * inv2_pln) * q[yj, xj, e]
                    msg[y, x, d] += kw * acc
    return msg


@njit(cache=True, inline="always")
def _score_plane_at(p1f, p2f, center_d, y, x, dexp, valid, lab, offsets, inv2_app, inv2_loc, sigma):
    h, w = dexp.shape
    score = 0.0
    for oi in range(offsets.shape[0]):
        ox = offsets[oi, 0]
        oy = offsets[oi, 1]
        yj = y + oy
        xj = x + ox
        if yj < 0 or yj >= h or xj < 0 or xj >= w:
            continue
        if not valid[yj, xj]:
            continue
        res = dexp[yj, xj] - center_d - (p1f * ox + p2f * oy)
        if abs(res) <= sigma:
            dc2 = 0.0
            for c in range(lab.shape[0]):
                dcc = lab[c, y, x] - lab[c, yj, xj]
                dc2 += dcc * dcc
            score += np.exp(-dc2 * inv2_app - (ox * ox + oy * oy) * inv2_loc)
    return score


@njit(cache=True, parallel=True)
def ransac_planes(dexp, valid, lab, inv2_app, inv2_loc, sigma, radius, iters, seed):
    h, w = dexp.shape
    n_off = (2 * radius + 1) * (2 * radius + 1) - 1
    offsets = np.empty((n_off, 2), dtype=np.int64)
    oi = 0
    for oy in range(-radius, radius + 1):
        for ox in range(-radius, radius + 1):
            if ox == 0 and oy == 0:
                continue
            offsets[oi, 0] = ox
            offsets[oi, 1] = oy
            oi += 1
    out = np.zeros((h, w, 2))
    for pix in prange(h * w):
        y = pix // w
        x = pix % w
        if not valid[y, x]:
            continue
        best_p1 = 0.0
        best_p2 = 0.0
        best_score = _score_plane_at(0.0, 0.0, dexp[y, x], y, x, dexp, valid, lab,
                                     offsets, inv2_app, inv2_loc, sigma)
        for t in range(iters):
            o1 = _hash_draw(seed, pix, t, 0, n_off)
            o2 = _hash_draw(seed, pix, t, 1, n_off)
            o3 = _hash_draw(seed, pix, t, 2, n_off + 1)  # n_off selects the centre
            if o1 == o2:
                continue
            x1 = x + offsets[o1, 0]
            y1 = y + offsets[o1, 1]
            x2 = x + offsets[o2, 0]
            y2 = y + offsets[o2, 1]
            if x1 < 0 or x1 >= w or y1 < 0 or y1 >= h:
                continue
            if x2 < 0 or x2 >= w or y2 < 0 or y2 >= h:
                continue
            if not (valid[y1, x1] and valid[y2, x2]):
                continue
            if o3 == n_off:
                ax = 0.0
                ay = 0.0
                ad = dexp[y, x]
            else:
                x3 = x + offsets[o3, 0]
                y3 = y + offsets[o3, 1]
                if x3 < 0 or x3 >= w or y3 < 0 or y3 >= h:
                    continue
                if not valid[y3, x3]:
                    continue
                ax = float(offsets[o3, 0])
                ay = float(offsets[o3, 1])
                ad = dexp[y3, x3]
            a11 = float(offsets[o1, 0]) - ax
            a12 = float(offsets[o1, 1]) - ay
            a21 = float(offsets[o2, 0]) - ax
            a22 = float(offsets[o2, 1]) - ay
            det = a11 * a22 - a12 * a21
            if abs(det) <= 1e-12:
                continue
            r1 = dexp[y1, x1] - ad
            r2 = dexp[y2, x2] - ad
            p1f = (r1 * a22 - r2 * a12) / det
            p2f = (a11 * r2 - a21 * r1) / det
            center_d = ad - (p1f * ax + p2f * ay)
            score = _score_plane_at(p1f, p2f, center_d, y, x, dexp, valid, lab,
                                    offsets, inv2_app, inv2_loc, sigma)
            if score > best_score:
                best_score = score
                best_p1 = p1f
                best_p2 = p2f
        out[y, x, 0] = best_p1
        out[y, x, 1] = best_p2
    return out
