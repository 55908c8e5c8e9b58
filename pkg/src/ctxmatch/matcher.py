"""Dense prediction: score volumes, winner-take-all, inverse-matching validation.

Candidates are stored as displacements (dx, dy) with x2 = x1 + disp; stereo
disparity d corresponds to disp = (-d, 0). Candidates whose matched anchor
falls outside the image carry a -inf sentinel score.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Tuple

import numpy as np

from ctxmatch.boosting import MatchingClassifier, evaluate_batch
from ctxmatch.representation import ImageRepresentation

NEG_INF = -np.inf
VOLUME_MAGIC = "ctxmatch-volume v1"


@dataclass(frozen=True)
class ScoreVolume:
    kind: str                 # stereo | flow | change
    anchor: str               # ref: anchors index image 1; match: image 2
    candidates: np.ndarray    # (n, 2) int64 displacements
    scores: np.ndarray        # (H, W, n) float64, -inf = invalid candidate

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def n_candidates(self) -> int:
        return self.scores.shape[2]


@dataclass(frozen=True)
class LabelMap:
    kind: str
    candidates: np.ndarray      # (n, 2) int64
    candidate_index: np.ndarray  # (H, W) int32
    valid: np.ndarray           # (H, W) bool

    def disparity(self) -> np.ndarray:
        """Winning disparity per pixel (stereo); invalid pixels hold 0."""
        d = -self.candidates[self.candidate_index, 0].astype(np.float64)
        return np.where(self.valid, d, 0.0)

    def flow(self) -> np.ndarray:
        f = self.candidates[self.candidate_index].astype(np.float64)
        return np.where(self.valid[:, :, None], f, 0.0)


def _score(model: MatchingClassifier, rep1, rep2, disps: np.ndarray,
           anchor: str, kind: str) -> ScoreVolume:
    h, w = rep1.height, rep1.width
    n = len(disps)
    vol = np.full((h, w, n), NEG_INF)
    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy.ravel()
    xx = xx.ravel()
    for ci in range(n):
        dx, dy = int(disps[ci, 0]), int(disps[ci, 1])
        if anchor == "ref":
            x1, y1 = xx, yy
            x2, y2 = xx + dx, yy + dy
            ok = (x2 >= 0) & (x2 < w) & (y2 >= 0) & (y2 < h)
        else:
            x2, y2 = xx, yy
            x1, y1 = xx - dx, yy - dy
            ok = (x1 >= 0) & (x1 < w) & (y1 >= 0) & (y1 < h)
        if not ok.any():
            continue
        s = evaluate_batch(model, rep1, rep2, x1[ok], y1[ok], x2[ok], y2[ok])
        plane = np.full(h * w, NEG_INF)
        plane[ok] = s
        vol[:, :, ci] = plane.reshape(h, w)
    return ScoreVolume(kind=kind, anchor=anchor, candidates=disps, scores=vol)


def stereo_candidates(d_max: int) -> np.ndarray:
    if d_max < 0:
        raise ValueError("d_max must be >= 0")
    return np.stack([-np.arange(d_max + 1), np.zeros(d_max + 1, dtype=np.int64)], axis=1)


def flow_candidates(window: Tuple[int, int, int, int]) -> np.ndarray:
    fx0, fx1, fy0, fy1 = window
    if fx1 < fx0 or fy1 < fy0:
        raise ValueError("empty flow window")
    gx, gy = np.meshgrid(np.arange(fx0, fx1 + 1), np.arange(fy0, fy1 + 1))
    return np.stack([gx.ravel(), gy.ravel()], axis=1).astype(np.int64)


def score_stereo(model, rep1, rep2, d_max: int) -> ScoreVolume:
    """scores[y, x, d] = H(I1, I2, (x, y), (x - d, y))."""
    return _score(model, rep1, rep2, stereo_candidates(d_max), "ref", "stereo")


def score_stereo_backward(model, rep1, rep2, d_max: int) -> ScoreVolume:
    """Inverse matching: candidates anchored at image-2 pixels,
    scores[y, x2, d] = H(I1, I2, (x2 + d, y), (x2, y))."""
    return _score(model, rep1, rep2, stereo_candidates(d_max), "match", "stereo")


def score_flow(model, rep1, rep2, window: Tuple[int, int, int, int]) -> ScoreVolume:
    """scores[y, x, f] = H(I1, I2, (x, y), (x, y) + f) over the window grid."""
    return _score(model, rep1, rep2, flow_candidates(window), "ref", "flow")


def score_flow_backward(model, rep1, rep2, window: Tuple[int, int, int, int]) -> ScoreVolume:
    return _score(model, rep1, rep2, flow_candidates(window), "match", "flow")


def score_change(model, rep1, rep2) -> ScoreVolume:
    """Single-candidate volume H(I1, I2, x, x); thresholding happens downstream."""
    disps = np.zeros((1, 2), dtype=np.int64)
    return _score(model, rep1, rep2, disps, "ref", "change")


def winner_take_all(v: ScoreVolume) -> LabelMap:
    """Per-pixel argmax over valid candidates; ties pick the smallest ordinal."""
    idx = np.argmax(v.scores, axis=2).astype(np.int32)
    valid = np.isfinite(v.scores.max(axis=2))
    return LabelMap(kind=v.kind, candidates=v.candidates,
                    candidate_index=np.where(valid, idx, 0), valid=valid)


def inverse_validate(forward: LabelMap, backward: LabelMap, tol: float = 1.0) -> LabelMap:
    """Keep a pixel valid only if the backward match lands within tol of it.

    Stereo: |d_fwd(x) - d_bwd(x - d_fwd(x))| <= tol; flow analogous with the
    Euclidean norm. Pixels whose match leaves the image are never validated.
    """
    h, w = forward.valid.shape
    yy, xx = np.mgrid[0:h, 0:w]
    disp = forward.candidates[forward.candidate_index]  # (H, W, 2)
    tx = xx + disp[:, :, 0]
    ty = yy + disp[:, :, 1]
    inb = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    txc = np.clip(tx, 0, w - 1)
    tyc = np.clip(ty, 0, h - 1)
    bdisp = backward.candidates[backward.candidate_index[tyc, txc]]
    bvalid = backward.valid[tyc, txc]
    diff = disp - bdisp
    dist = np.sqrt((diff ** 2).sum(axis=2))
    ok = forward.valid & inb & bvalid & (dist <= tol)
    return replace(forward, valid=ok)


def save_volume(v: ScoreVolume, path) -> None:
    lines = [
        VOLUME_MAGIC,
        "kind %s" % v.kind,
        "anchor %s" % v.anchor,
        "dims %d %d %d" % (v.width, v.height, v.n_candidates),
    ]
    for dx, dy in v.candidates:
        lines.append("c %d %d" % (dx, dy))
    lines.append("end")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("ascii"))
        f.write(v.scores.astype("<f4").tobytes())


def load_volume(path) -> ScoreVolume:
    raw = Path(path).read_bytes()
    head, _, rest = raw.partition(b"end\n")
    lines = head.decode("ascii").splitlines()
    if lines[0] != VOLUME_MAGIC:
        raise ValueError("not a score volume file: %s" % path)
    kind = lines[1].split()[1]
    anchor = lines[2].split()[1]
    w, h, n = map(int, lines[3].split()[1:])
    cands = np.array([list(map(int, ln.split()[1:])) for ln in lines[4:4 + n]], dtype=np.int64)
    scores = np.frombuffer(rest, dtype="<f4", count=h * w * n).astype(np.float64).reshape(h, w, n)
    return ScoreVolume(kind=kind, anchor=anchor, candidates=cands, scores=scores)
