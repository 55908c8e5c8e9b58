"""File formats: 8/16-bit PNG rasters, KITTI disparity encoding, binary flow
files and the flow color wheel."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from PIL import Image as PILImage

from ctxmatch.data import ChangeMask, DatasetPair, DisparityMap, FlowField
from ctxmatch.grid import Image

FLOW_MAGIC = b"PIEH"
FLOW_INVALID = 1e9  # sentinel written for pixels without a valid flow
KITTI_SCALE = 256.0


def load_image_rgb(path) -> Image:
    pil = PILImage.open(path).convert("RGB")
    arr = np.asarray(pil, dtype=np.float64) / 255.0
    return Image.from_array(arr)


def save_image_rgb(img, path) -> None:
    if isinstance(img, Image):
        arr = np.moveaxis(img.data, 0, 2)
    else:
        arr = np.asarray(img)
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(u8, mode="RGB").save(path)


def load_kitti_disparity(path) -> DisparityMap:
    """16-bit PNG, disparity = raw / 256, raw 0 = invalid."""
    pil = PILImage.open(path)
    raw = np.asarray(pil, dtype=np.uint16).astype(np.float64)
    if raw.ndim != 2:
        raise ValueError("disparity PNG must be single-channel 16-bit")
    return DisparityMap(values=raw / KITTI_SCALE, valid=raw > 0)


def save_disparity(dm: DisparityMap, path) -> None:
    raw = np.clip(np.rint(dm.values * KITTI_SCALE), 0, 65535).astype(np.uint16)
    raw = np.where(dm.valid, np.maximum(raw, 1), 0).astype(np.uint16)
    PILImage.fromarray(raw).save(path)


def write_flow(field: FlowField, path) -> None:
    h, w = field.valid.shape
    uv = field.values.astype("<f4").copy()
    uv[~field.valid] = FLOW_INVALID
    with open(path, "wb") as f:
        f.write(FLOW_MAGIC)
        f.write(struct.pack("<ii", w, h))
        f.write(uv.tobytes())


def read_flow(path) -> FlowField:
    raw = Path(path).read_bytes()
    if raw[:4] != FLOW_MAGIC:
        raise ValueError("not a flow file: %s" % path)
    w, h = struct.unpack_from("<ii", raw, 4)
    need = 12 + 8 * w * h
    if len(raw) < need:
        raise ValueError("truncated flow file: %s" % path)
    uv = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12)
    uv = uv.astype(np.float64).reshape(h, w, 2)
    valid = np.abs(uv).max(axis=2) < FLOW_INVALID / 2
    values = np.where(valid[:, :, None], uv, 0.0)
    return FlowField(values=values, valid=valid)


def _color_wheel() -> np.ndarray:
    # Middlebury-style wheel: RY 15, YG 6, GC 4, CB 11, BM 13, MR 6
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    cols = []
    for n, (c0, c1) in zip(
        (ry, yg, gc, cb, bm, mr),
        (((255, 0, 0), (255, 255, 0)), ((255, 255, 0), (0, 255, 0)),
         ((0, 255, 0), (0, 255, 255)), ((0, 255, 255), (0, 0, 255)),
         ((0, 0, 255), (255, 0, 255)), ((255, 0, 255), (255, 0, 0))),
    ):
        for i in range(n):
            t = i / n
            cols.append([c0[k] + t * (c1[k] - c0[k]) for k in range(3)])
    return np.array(cols)


def flow_colorize(field: FlowField) -> np.ndarray:
    """Direction -> hue, magnitude / per-image max -> saturation; invalid
    pixels black. Returns (H, W, 3) uint8."""
    wheel = _color_wheel()
    ncols = len(wheel)
    u = field.values[:, :, 0]
    v = field.values[:, :, 1]
    rad = np.hypot(u, v)
    maxrad = rad[field.valid].max() if field.valid.any() else 0.0
    if maxrad <= 0:
        maxrad = 1.0
    rad = rad / maxrad
    a = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (a + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64) % ncols
    k1 = (k0 + 1) % ncols
    f = fk - np.floor(fk)
    img = np.empty(u.shape + (3,), dtype=np.uint8)
    for c in range(3):
        col = (wheel[k0, c] + f * (wheel[k1, c] - wheel[k0, c])) / 255.0
        col = 1.0 - rad * (1.0 - col)  # saturate with magnitude
        img[:, :, c] = np.clip(np.rint(255.0 * col), 0, 255).astype(np.uint8)
    img[~field.valid] = 0
    return img


def save_mask(mask: np.ndarray, path) -> None:
    PILImage.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_mask(path) -> np.ndarray:
    return np.asarray(PILImage.open(path).convert("L")) >= 128


# pair directories: im1.png, im2.png, meta.yaml and one ground-truth file

def save_pair(pair: DatasetPair, dirpath) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    save_image_rgb(pair.image1, d / "im1.png")
    save_image_rgb(pair.image2, d / "im2.png")
    meta = {"task": pair.task}
    gt = pair.ground_truth
    if pair.task == "stereo":
        save_disparity(gt, d / "gt_disp.png")
    elif pair.task == "flow":
        write_flow(gt, d / "gt_flow.flo")
    else:
        save_mask(gt.values, d / "gt_mask.png")
    if pair.occlusion is not None:
        save_mask(pair.occlusion, d / "occ.png")
    with open(d / "meta.yaml", "w") as f:
        yaml.safe_dump(meta, f, sort_keys=True)


def load_pair(dirpath) -> DatasetPair:
    d = Path(dirpath)
    with open(d / "meta.yaml") as f:
        meta = yaml.safe_load(f)
    img1 = load_image_rgb(d / "im1.png")
    img2 = load_image_rgb(d / "im2.png")
    task = meta["task"]
    if task == "stereo":
        gt = load_kitti_disparity(d / "gt_disp.png")
    elif task == "flow":
        gt = read_flow(d / "gt_flow.flo")
    elif task == "change":
        m = load_mask(d / "gt_mask.png")
        gt = ChangeMask(values=m, valid=np.ones_like(m, dtype=bool))
    else:
        raise ValueError("unknown task %r in %s" % (task, dirpath))
    occ: Optional[np.ndarray] = None
    if (d / "occ.png").exists():
        occ = load_mask(d / "occ.png")
    return DatasetPair(image1=img1, image2=img2, ground_truth=gt, occlusion=occ)
