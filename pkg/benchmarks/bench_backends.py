"""Compare the compiled and pure-numpy kernel backends on the three hot
paths: feature evaluation, the mean-field message pass, and RANSAC plane
fitting. Prints timings and checks the backends agree numerically.

Run: python benchmarks/bench_backends.py [--size 96x64] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ctxmatch import kernels_numpy

try:
    from ctxmatch import kernels_numba
    HAVE_NUMBA = True
except ImportError:
    kernels_numba = None
    HAVE_NUMBA = False

from ctxmatch.grid import build_integral


def _timeit(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def make_inputs(h, w, seed=0):
    rng = np.random.default_rng(seed)
    k = 4
    grid1 = build_integral(rng.random((8, h, w)), factor=k)
    grid2 = build_integral(rng.random((8, h, w)), factor=k)
    cum1 = np.ascontiguousarray(grid1.cumsum[0])
    cum2 = np.ascontiguousarray(grid2.cumsum[0])
    n = 20000
    x1 = rng.integers(0, w, n)
    y1 = rng.integers(0, h, n)
    x2 = np.clip(x1 - rng.integers(0, 16, n), 0, w - 1)
    feat_args = (cum1, cum2, k, w, h,
                 cum1.shape[1] - 1, cum1.shape[0] - 1,
                 -7, 3, 12, 9,
                 np.ascontiguousarray(x1), np.ascontiguousarray(y1),
                 np.ascontiguousarray(x2), np.ascontiguousarray(y1.copy()), False)

    nd = 16
    q = rng.random((h, w, nd))
    q /= q.sum(axis=2, keepdims=True)
    lab = rng.random((3, h, w)) * 100.0
    p1 = rng.normal(0, 0.3, (h, w))
    p2 = rng.normal(0, 0.3, (h, w))
    dvals = np.arange(nd, dtype=np.float64)
    mf_args = (q, lab, p1, p2, dvals, 1.0 / 128.0, 1.0 / 882.0, 1.0 / 4.5, 8)

    disp = 0.5 * np.arange(w)[None, :] + rng.normal(0, 0.2, (h, w))
    valid = rng.random((h, w)) > 0.1
    rs_args = (disp, valid, lab, 1.0 / 128.0, 1.0 / 882.0, 1.0, 8, 32, 7)
    return feat_args, mf_args, rs_args


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", default="96x64", help="WxH of the test image")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    w, h = (int(t) for t in args.size.split("x"))
    feat_args, mf_args, rs_args = make_inputs(h, w)

    cases = [
        ("feature_batch", "feature_batch", feat_args),
        ("mean_field_message", "mean_field_message", mf_args),
        ("ransac_planes", "ransac_planes", rs_args),
    ]
    print("image %dx%d, best of %d runs" % (w, h, args.repeats))
    for label, fname, fargs in cases:
        t_np, out_np = _timeit(lambda: getattr(kernels_numpy, fname)(*fargs),
                               args.repeats)
        line = "%-20s numpy %8.1f ms" % (label, 1e3 * t_np)
        if HAVE_NUMBA:
            getattr(kernels_numba, fname)(*fargs)  # compile outside the timer
            t_nb, out_nb = _timeit(lambda: getattr(kernels_numba, fname)(*fargs),
                                   args.repeats)
            agree = np.allclose(out_np, out_nb, rtol=1e-9, atol=1e-9)
            line += "   numba %8.1f ms   speedup %5.1fx   agree=%s" % (
                1e3 * t_nb, t_np / max(t_nb, 1e-12), agree)
            if not agree:
                raise SystemExit("backend disagreement in %s" % label)
        print(line)
    if not HAVE_NUMBA:
        print("numba backend unavailable; only the numpy path was timed")


if __name__ == "__main__":
    main()
