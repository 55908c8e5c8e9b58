"""Evaluation metrics for stereo, change detection and optical flow."""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from ctxmatch.data import ChangeMask, DisparityMap, FlowField


def stereo_metrics(est: np.ndarray, gt: DisparityMap,
                   occlusion: Optional[np.ndarray] = None) -> Dict[str, float]:
    """Outlier ratios at 3 and 5 px (all valid pixels and the non-occluded
    subset) plus mean absolute disparity error."""
    if est.shape != gt.values.shape:
        raise ValueError("estimate and ground truth differ in size")
    valid = gt.valid
    if not valid.any():
        raise ValueError("ground truth has no valid pixels")
    err = np.abs(est - gt.values)
    out: Dict[str, float] = {}
    for tau in (3.0, 5.0):
        out["outlier_%dpx" % int(tau)] = float((err[valid] > tau).mean())
    noc = valid if occlusion is None else (valid & ~occlusion)
    for tau in (3.0, 5.0):
        out["outlier_noc_%dpx" % int(tau)] = float((err[noc] > tau).mean()) if noc.any() else 0.0
    out["mae"] = float(err[valid].mean())
    return out


def change_metrics(scores: np.ndarray, threshold: float, gt: ChangeMask) -> Dict[str, float]:
    """Binarize the matching score (change = score < threshold), then global
    accuracy plus per-class and macro-averaged recall/precision."""
    if scores.shape != gt.values.shape:
        raise ValueError("scores and ground truth differ in size")
    valid = gt.valid
    pred_change = scores < threshold
    p = pred_change[valid]
    t = gt.values[valid]
    n = p.size
    if n == 0:
        raise ValueError("ground truth has no valid pixels")
    out: Dict[str, float] = {"accuracy": float((p == t).mean())}
    recalls = []
    precisions = []
    for cls, name in ((True, "change"), (False, "nochange")):
        tp = float(((p == cls) & (t == cls)).sum())
        fn = float(((p != cls) & (t == cls)).sum())
        fp = float(((p == cls) & (t != cls)).sum())
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        out["recall_%s" % name] = rec
        out["precision_%s" % name] = prec
        recalls.append(rec)
        precisions.append(prec)
    out["recall_macro"] = float(np.mean(recalls))
    out["precision_macro"] = float(np.mean(precisions))
    return out


def flow_metrics(est: FlowField, gt: FlowField) -> Dict[str, float]:
    """Endpoint-error statistics over pixels valid in the ground truth."""
    valid = gt.valid
    if not valid.any():
        raise ValueError("ground truth has no valid pixels")
    epe = np.sqrt(((est.values - gt.values) ** 2).sum(axis=2))[valid]
    return {
        "epe_mean": float(epe.mean()),
        "epe_outlier_1px": float((epe > 1.0).mean()),
        "epe_outlier_3px": float((epe > 3.0).mean()),
        "exact_px": float((epe <= 0.5).mean()),
    }
