"""Gentle AdaBoost training of the matching classifier.

The classifier is an ordered sum of decision stumps over single dimensions of
the contextual difference representation. Stumps are fitted by weighted least
squares with a brute-force threshold search over a quantile grid; sample
weights are multiplied by exp(-y * h) and renormalized each round.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ctxmatch.data import ChangeMask, DatasetPair, DisparityMap, FlowField
from ctxmatch.grid import Rectangle
from ctxmatch.representation import (
    FeatureIndex,
    ImageRepresentation,
    RectangleSet,
    decode_index,
    feature_values,
    total_dimensionality,
)

MODEL_MAGIC = "ctxmatch-model v1"
THETA_GRID_SIZE = 64


@dataclass(frozen=True)
class SampleSet:
    """Training samples as parallel arrays, grouped by pair index."""

    pair_index: np.ndarray  # (N,) int32
    x1: np.ndarray          # (N,) int64
    y1: np.ndarray
    x2: np.ndarray
    y2: np.ndarray
    label: np.ndarray       # (N,) float64 in {+1, -1}
    weight: np.ndarray      # (N,) float64, sums to 1

    def __len__(self) -> int:
        return len(self.label)


@dataclass(frozen=True)
class MatchingClassifier:
    families: Tuple[str, ...]
    family_channels: Tuple[int, ...]
    bow_factor: int
    rect_set: RectangleSet
    absolute: bool
    seed: int
    neg_ratio: int
    codebook_digests: Dict[str, str]
    stump_family: np.ndarray   # (M,) uint8
    stump_rect: np.ndarray     # (M,) uint16
    stump_channel: np.ndarray  # (M,) uint16
    stump_theta: np.ndarray    # (M,) float32
    stump_a: np.ndarray        # (M,) float32
    stump_b: np.ndarray        # (M,) float32

    @property
    def n_stumps(self) -> int:
        return len(self.stump_theta)


def _sample_negative_disparities(rng, d_true, d_max, n):
    """Uniform in [0, d_max] excluding within 1 px of the true disparity."""
    out = np.empty(n, dtype=np.int64)
    filled = 0
    while filled < n:
        cand = rng.integers(0, d_max + 1, size=2 * (n - filled))
        cand = cand[np.abs(cand - d_true) > 1.0]
        take = min(len(cand), n - filled)
        out[filled:filled + take] = cand[:take]
        filled += take
    return out


def assemble_samples(
    pairs: Sequence[DatasetPair],
    neg_ratio: int = 50,
    seed: int = 0,
    d_max: Optional[int] = None,
    flow_window: Optional[Tuple[int, int, int, int]] = None,
    max_positives: Optional[int] = None,
) -> SampleSet:
    """One positive per labelled pixel (optionally subsampled to
    max_positives per pair), neg_ratio negatives per positive with the match
    position resampled from the candidate range, excluding candidates within
    1 px of the true match. Class weights balance positives and negatives."""
    rng = np.random.default_rng(seed)
    recs: List[Tuple[int, int, int, int, int, int]] = []  # pair, x1, y1, x2, y2, label
    for pi, pair in enumerate(pairs):
        gt = pair.ground_truth
        h, w = gt.valid.shape
        ys, xs = np.nonzero(gt.valid)
        if len(xs) == 0:
            continue
        if pair.task == "change":
            assert isinstance(gt, ChangeMask)
            lab = np.where(gt.values[ys, xs], -1, 1)
            if max_positives is not None and len(xs) > 2 * max_positives:
                keep = rng.choice(len(xs), size=2 * max_positives, replace=False)
                keep.sort()
                xs, ys, lab = xs[keep], ys[keep], lab[keep]
            for x, y, l in zip(xs, ys, lab):
                recs.append((pi, x, y, x, y, l))
            continue
        if pair.task == "stereo":
            assert isinstance(gt, DisparityMap) and d_max is not None
            d = np.rint(gt.values[ys, xs]).astype(np.int64)
            ok = (xs - d >= 0) & (d >= 0) & (d <= d_max)
            xs, ys, d = xs[ok], ys[ok], d[ok]
            if max_positives is not None and len(xs) > max_positives:
                keep = rng.choice(len(xs), size=max_positives, replace=False)
                keep.sort()
                xs, ys, d = xs[keep], ys[keep], d[keep]
            for x, y, dt in zip(xs, ys, d):
                recs.append((pi, x, y, x - dt, y, 1))
                hi = min(d_max, x)  # negatives must stay in bounds
                n_excluded = max(0, min(hi, dt + 1) - max(0, dt - 1) + 1)
                if hi + 1 - n_excluded <= 0:
                    continue
                negs = _sample_negative_disparities(rng, dt, hi, neg_ratio)
                for dn in negs:
                    recs.append((pi, x, y, x - dn, y, -1))
        else:
            assert isinstance(gt, FlowField) and flow_window is not None
            fx0, fx1, fy0, fy1 = flow_window
            f = np.rint(gt.values[ys, xs]).astype(np.int64)
            tx, ty = xs + f[:, 0], ys + f[:, 1]
            ok = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
            ok &= (f[:, 0] >= fx0) & (f[:, 0] <= fx1) & (f[:, 1] >= fy0) & (f[:, 1] <= fy1)
            xs, ys, tx, ty = xs[ok], ys[ok], tx[ok], ty[ok]
            if max_positives is not None and len(xs) > max_positives:
                keep = rng.choice(len(xs), size=max_positives, replace=False)
                keep.sort()
                xs, ys, tx, ty = xs[keep], ys[keep], tx[keep], ty[keep]
            for x, y, mx, my in zip(xs, ys, tx, ty):
                recs.append((pi, x, y, mx, my, 1))
                got = 0
                attempts = 0
                while got < neg_ratio and attempts < 16:
                    attempts += 1
                    gx = rng.integers(fx0, fx1 + 1, size=4 * neg_ratio) + x
                    gy = rng.integers(fy0, fy1 + 1, size=4 * neg_ratio) + y
                    good = (gx >= 0) & (gx < w) & (gy >= 0) & (gy < h)
                    good &= ((gx - mx) ** 2 + (gy - my) ** 2) > 1.0
                    gx, gy = gx[good], gy[good]
                    for nx, ny in zip(gx[:neg_ratio - got], gy[:neg_ratio - got]):
                        recs.append((pi, x, y, nx, ny, -1))
                    got += min(len(gx), neg_ratio - got)
    if not recs:
        raise ValueError("no labelled pixels available for training")
    arr = np.array(recs, dtype=np.int64)
    label = arr[:, 5].astype(np.float64)
    n_pos = int((label > 0).sum())
    n_neg = int((label < 0).sum())
    weight = np.where(label > 0,
                      0.5 / max(n_pos, 1),
                      0.5 / max(n_neg, 1))
    if n_pos == 0 or n_neg == 0:
        weight = np.full(len(label), 1.0 / len(label))
    return SampleSet(
        pair_index=arr[:, 0].astype(np.int32),
        x1=arr[:, 1].copy(), y1=arr[:, 2].copy(),
        x2=arr[:, 3].copy(), y2=arr[:, 4].copy(),
        label=label, weight=weight / weight.sum(),
    )


def theta_grid(values: np.ndarray, n: int = THETA_GRID_SIZE) -> np.ndarray:
    """Candidate thresholds: n inner quantiles of the observed values."""
    qs = np.linspace(0.0, 1.0, n + 2)[1:-1]
    return np.quantile(values, qs)


def fit_stump(
    values: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    grid: Optional[np.ndarray] = None,
) -> Tuple[float, float, float, float]:
    """Gentle-AdaBoost stump fit: brute-force threshold search over the grid
    with closed-form responses. Returns (theta, a, b, weighted squared error);
    the partition {v > theta} responds a + b, the rest b. Thresholds leaving
    one side empty are skipped; ties pick the smallest theta."""
    if grid is None:
        grid = theta_grid(values)
    order = np.argsort(values, kind="stable")
    vs = values[order]
    csw = np.concatenate([[0.0], np.cumsum(weights[order])])
    cswy = np.concatenate([[0.0], np.cumsum((weights * targets)[order])])
    n = len(values)
    n_lo = np.searchsorted(vs, grid, side="right")
    w_lo = csw[n_lo]
    w_hi = csw[n] - w_lo
    s_lo = cswy[n_lo]
    s_hi = cswy[n] - s_lo
    usable = (n_lo > 0) & (n_lo < n)
    if not usable.any():
        b = float(np.sum(weights * targets) / np.sum(weights))
        theta = float(grid[0]) if len(grid) else 0.0
        err = float(np.sum(weights * (targets - b) ** 2))
        return theta, 0.0, b, err
    # minimizing sum w (y - h)^2 is maximizing the explained term below
    gain = np.where(usable, s_hi ** 2 / np.where(w_hi > 0, w_hi, 1.0)
                    + s_lo ** 2 / np.where(w_lo > 0, w_lo, 1.0), -np.inf)
    best = int(np.argmax(gain))
    theta = float(grid[best])
    mask = values > theta
    b = float(np.sum(weights[~mask] * targets[~mask]) / np.sum(weights[~mask]))
    apb = float(np.sum(weights[mask] * targets[mask]) / np.sum(weights[mask]))
    a = apb - b
    h = np.where(mask, apb, b)
    err = float(np.sum(weights * (targets - h) ** 2))
    return theta, a, b, err


def _pair_slices(sample_pairs: np.ndarray) -> List[Tuple[int, slice]]:
    out = []
    start = 0
    for i in range(1, len(sample_pairs) + 1):
        if i == len(sample_pairs) or sample_pairs[i] != sample_pairs[start]:
            out.append((int(sample_pairs[start]), slice(start, i)))
            start = i
    return out


def _dim_values(samples, reps, rect_set, idx: FeatureIndex, absolute, slices) -> np.ndarray:
    vals = np.empty(len(samples))
    rect = rect_set.rects[idx.rect_index]
    for pi, sl in slices:
        rep1, rep2 = reps[pi]
        vals[sl] = feature_values(
            rep1, rep2,
            samples.x1[sl], samples.y1[sl], samples.x2[sl], samples.y2[sl],
            rect, idx.family, idx.channel, absolute,
        )
    return vals


def train(
    samples: SampleSet,
    reps: Sequence[Tuple[ImageRepresentation, ImageRepresentation]],
    rect_set: RectangleSet,
    rounds: int = 5000,
    dims_per_round: int = 400,
    seed: int = 0,
    absolute: bool = False,
    neg_ratio: int = 50,
    codebook_digests: Optional[Dict[str, str]] = None,
) -> Tuple[MatchingClassifier, List[float]]:
    """Boost `rounds` stumps over randomly sampled feature dimensions.

    Feature values are never materialized as a full matrix; each candidate
    dimension is evaluated lazily from the integral grids. Returns the model
    and the per-round training exponential loss."""
    if dims_per_round < 1:
        raise ValueError("dims_per_round must be >= 1")
    rep0 = reps[0][0]
    fc = rep0.family_channels
    total = total_dimensionality(fc, len(rect_set))
    rng = np.random.default_rng(seed)
    slices = _pair_slices(samples.pair_index)
    y = samples.label
    w = samples.weight.copy()
    w = w / w.sum()
    w0 = w.copy()
    margins = np.zeros(len(samples))
    losses: List[float] = []
    sf: List[int] = []
    sr: List[int] = []
    sc: List[int] = []
    st: List[np.float32] = []
    sa: List[np.float32] = []
    sb: List[np.float32] = []
    for _ in range(rounds):
        flats = np.unique(rng.integers(0, total, size=min(dims_per_round, total)))
        best_err = np.inf
        best = None
        for flat in flats:  # ascending: error ties resolve to the lowest ordinal
            idx = decode_index(int(flat), fc)
            vals = _dim_values(samples, reps, rect_set, idx, absolute, slices)
            theta, a, b, err = fit_stump(vals, y, w)
            if err < best_err:
                best_err = err
                best = (idx, np.float32(theta), np.float32(a), np.float32(b), vals)
        idx, t32, a32, b32, vals = best
        sf.append(idx.family)
        sr.append(idx.rect_index)
        sc.append(idx.channel)
        st.append(t32)
        sa.append(a32)
        sb.append(b32)
        h = np.where(vals > float(t32), float(a32) + float(b32), float(b32))
        margins += y * h
        w = w * np.exp(-y * h)
        s = w.sum()
        if not np.isfinite(s) or s <= 0 or not np.all(np.isfinite(w)):
            raise ArithmeticError("non-finite boosting weights; aborting training")
        w /= s
        losses.append(float(np.sum(w0 * np.exp(-margins))))
    model = MatchingClassifier(
        families=rep0.families,
        family_channels=fc,
        bow_factor=rep0.grids[rep0.families[0]].factor if len(rep0.families) > 1 else 1,
        rect_set=rect_set,
        absolute=absolute,
        seed=seed,
        neg_ratio=neg_ratio,
        codebook_digests=dict(codebook_digests or {}),
        stump_family=np.array(sf, dtype=np.uint8),
        stump_rect=np.array(sr, dtype=np.uint16),
        stump_channel=np.array(sc, dtype=np.uint16),
        stump_theta=np.array(st, dtype=np.float32),
        stump_a=np.array(sa, dtype=np.float32),
        stump_b=np.array(sb, dtype=np.float32),
    )
    return model, losses


def evaluate_batch(
    model: MatchingClassifier,
    rep1: ImageRepresentation,
    rep2: ImageRepresentation,
    x1: np.ndarray, y1: np.ndarray, x2: np.ndarray, y2: np.ndarray,
) -> np.ndarray:
    """Classifier score (ordered stump sum) for a batch of anchor pairs."""
    score = np.zeros(len(x1))
    for m in range(model.n_stumps):
        rect = model.rect_set.rects[int(model.stump_rect[m])]
        v = feature_values(
            rep1, rep2, x1, y1, x2, y2,
            rect, int(model.stump_family[m]), int(model.stump_channel[m]), model.absolute,
        )
        a = float(model.stump_a[m])
        b = float(model.stump_b[m])
        score += np.where(v > float(model.stump_theta[m]), a + b, b)
    return score


def evaluate(model, rep1, rep2, x1: Tuple[int, int], x2: Tuple[int, int]) -> float:
    s = evaluate_batch(
        model, rep1, rep2,
        np.array([x1[0]]), np.array([x1[1]]), np.array([x2[0]]), np.array([x2[1]]),
    )
    return float(s[0])


def save_model(model: MatchingClassifier, path) -> None:
    lines = [
        MODEL_MAGIC,
        "absolute %d" % int(model.absolute),
        "seed %d" % model.seed,
        "neg_ratio %d" % model.neg_ratio,
        "bow_factor %d" % model.bow_factor,
    ]
    for name, ch in zip(model.families, model.family_channels):
        digest = model.codebook_digests.get(name, "-")
        lines.append("family %s %d %s" % (name, ch, digest))
    lines.append("rect_seed %d" % model.rect_set.seed)
    lines.append("rect_max_extent %d" % model.rect_set.max_extent)
    lines.append("rects %d" % len(model.rect_set))
    for r in model.rect_set.rects:
        lines.append("r %d %d %d %d" % (r.dx, r.dy, r.w, r.h))
    lines.append("stumps %d" % model.n_stumps)
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        for m in range(model.n_stumps):
            f.write(struct.pack(
                "<BHHfff",
                int(model.stump_family[m]), int(model.stump_rect[m]),
                int(model.stump_channel[m]), float(model.stump_theta[m]),
                float(model.stump_a[m]), float(model.stump_b[m]),
            ))


def load_model(path) -> MatchingClassifier:
    raw = Path(path).read_bytes()
    head, _, rest = raw.partition(b"\nend\n")
    lines = head.decode("ascii").splitlines()
    if lines[0] != MODEL_MAGIC:
        raise ValueError("not a model file: %s" % path)
    scalars = {}
    families: List[str] = []
    channels: List[int] = []
    digests: Dict[str, str] = {}
    rects: List[Rectangle] = []
    for line in lines[1:]:
        parts = line.split()
        if parts[0] == "family":
            families.append(parts[1])
            channels.append(int(parts[2]))
            if parts[3] != "-":
                digests[parts[1]] = parts[3]
        elif parts[0] == "r":
            rects.append(Rectangle(*map(int, parts[1:])))
        else:
            scalars[parts[0]] = parts[1]
    n = int(scalars["stumps"])
    rec = struct.Struct("<BHHfff")
    sf = np.empty(n, dtype=np.uint8)
    sr = np.empty(n, dtype=np.uint16)
    sc = np.empty(n, dtype=np.uint16)
    st = np.empty(n, dtype=np.float32)
    sa = np.empty(n, dtype=np.float32)
    sb = np.empty(n, dtype=np.float32)
    for m in range(n):
        f_, r_, c_, t_, a_, b_ = rec.unpack_from(rest, m * rec.size)
        sf[m], sr[m], sc[m], st[m], sa[m], sb[m] = f_, r_, c_, t_, a_, b_
    rect_set = RectangleSet(
        rects=tuple(rects),
        seed=int(scalars["rect_seed"]),
        max_extent=int(scalars["rect_max_extent"]),
    )
    return MatchingClassifier(
        families=tuple(families),
        family_channels=tuple(channels),
        bow_factor=int(scalars["bow_factor"]),
        rect_set=rect_set,
        absolute=bool(int(scalars["absolute"])),
        seed=int(scalars["seed"]),
        neg_ratio=int(scalars["neg_ratio"]),
        codebook_digests=digests,
        stump_family=sf, stump_rect=sr, stump_channel=sc,
        stump_theta=st, stump_a=sa, stump_b=sb,
    )
