"""k-means visual vocabularies and soft assignment of descriptors to words."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np

from ctxmatch.features import DescriptorField

MAGIC = "ctxmatch-codebook v1"
SOFT_KNN = 8


@dataclass(frozen=True)
class Codebook:
    kind: str
    centers: np.ndarray  # (K, dim) float32
    kernel_width: float  # sigma_w of the soft-assignment kernel
    seed: int

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class SoftAssignmentField:
    """Per pixel: up to SOFT_KNN (word index, weight) pairs, weights sum to 1."""

    indices: np.ndarray  # (H, W, knn) int32
    weights: np.ndarray  # (H, W, knn) float64
    k: int


def _sq_dists(samples: np.ndarray, centers: np.ndarray) -> np.ndarray:
    s2 = (samples ** 2).sum(axis=1)[:, None]
    c2 = (centers ** 2).sum(axis=1)[None, :]
    d2 = s2 + c2 - 2.0 * samples @ centers.T
    return np.maximum(d2, 0.0)


def _kmeans_pp(samples: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = samples.shape[0]
    centers = np.empty((k, samples.shape[1]))
    centers[0] = samples[rng.integers(n)]
    d2 = ((samples - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = samples[rng.integers(n)]
            continue
        probs = d2 / total
        idx = rng.choice(n, p=probs)
        centers[i] = samples[idx]
        d2 = np.minimum(d2, ((samples - centers[i]) ** 2).sum(axis=1))
    return centers


def train_kmeans(samples: np.ndarray, k: int, seed: int,
                 max_iter: int = 100, rel_tol: float = 1e-4,
                 kind: str = "generic") -> Codebook:
    """Lloyd iterations from k-means++ initialization; terminates when the
    relative inertia decrease drops below rel_tol. The soft-assignment kernel
    width is set to the mean distance of each sample to its nearest center."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError("samples must be (n, dim)")
    n = samples.shape[0]
    if n < k:
        raise ValueError("need at least k=%d samples, got %d" % (k, n))
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(samples, k, rng)
    prev_inertia = np.inf
    for _ in range(max_iter):
        d2 = _sq_dists(samples, centers)
        assign = d2.argmin(axis=1)
        inertia = d2[np.arange(n), assign].sum()
        assert inertia <= prev_inertia + 1e-9 * max(1.0, abs(prev_inertia))
        if prev_inertia < np.inf and prev_inertia - inertia < rel_tol * max(prev_inertia, 1e-300):
            break
        prev_inertia = inertia
        for i in range(k):
            mask = assign == i
            if mask.any():
                centers[i] = samples[mask].mean(axis=0)
            else:
                # re-seed empty clusters on the farthest sample
                far = d2[np.arange(n), assign].argmax()
                centers[i] = samples[far]
    d2 = _sq_dists(samples, centers)
    sigma = float(np.sqrt(d2.min(axis=1)).mean())
    if sigma <= 0:
        sigma = 1.0
    return Codebook(kind=kind, centers=centers.astype(np.float32), kernel_width=sigma, seed=seed)


def soft_assign(field: DescriptorField, cb: Codebook) -> SoftAssignmentField:
    """Distance-based exponential soft weights over the 8 nearest words."""
    if field.dim != cb.dim:
        raise ValueError("descriptor dim %d != codebook dim %d" % (field.dim, cb.dim))
    h, w, dim = field.data.shape
    flat = field.data.reshape(-1, dim)
    d2 = _sq_dists(flat, cb.centers.astype(np.float64))
    knn = min(SOFT_KNN, cb.k)
    idx = np.argpartition(d2, knn - 1, axis=1)[:, :knn] if knn < cb.k else \
        np.tile(np.arange(cb.k), (flat.shape[0], 1))
    # order the kept words by distance for determinism
    part = np.take_along_axis(d2, idx, axis=1)
    order = np.argsort(part, axis=1, kind="stable")
    idx = np.take_along_axis(idx, order, axis=1)
    part = np.take_along_axis(part, order, axis=1)
    wts = np.exp(-(part - part[:, :1]) / (2.0 * cb.kernel_width ** 2))
    wts /= wts.sum(axis=1, keepdims=True)
    return SoftAssignmentField(
        indices=idx.reshape(h, w, knn).astype(np.int32),
        weights=wts.reshape(h, w, knn),
        k=cb.k,
    )


def assignment_maps(sa: SoftAssignmentField) -> np.ndarray:
    """Expand a SoftAssignmentField into dense per-word weight maps (K, H, W)."""
    h, w, knn = sa.indices.shape
    maps = np.zeros((sa.k, h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    for j in range(knn):
        np.add.at(maps, (sa.indices[:, :, j], yy, xx), sa.weights[:, :, j])
    return maps


def save_codebook(cb: Codebook, path) -> None:
    header = "\n".join([
        MAGIC,
        "kind %s" % cb.kind,
        "k %d" % cb.k,
        "dim %d" % cb.dim,
        "sigma %r" % cb.kernel_width,
        "seed %d" % cb.seed,
        "end",
        "",
    ])
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(cb.centers.astype("<f4").tobytes())


def load_codebook(path) -> Codebook:
    raw = Path(path).read_bytes()
    head, _, rest = raw.partition(b"end\n")
    lines = head.decode("ascii").splitlines()
    if lines[0] != MAGIC:
        raise ValueError("not a codebook file: %s" % path)
    fields = dict(line.split(" ", 1) for line in lines[1:])
    k, dim = int(fields["k"]), int(fields["dim"])
    centers = np.frombuffer(rest, dtype="<f4", count=k * dim).reshape(k, dim).copy()
    return Codebook(kind=fields["kind"], centers=centers,
                    kernel_width=float(fields["sigma"]), seed=int(fields["seed"]))


def codebook_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
