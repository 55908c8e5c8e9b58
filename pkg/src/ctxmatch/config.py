"""Experiment configuration: a YAML file with a schema version, merged over
defaults, plus deterministic serialization for reproducible records."""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Optional

import yaml

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    # descriptor families quantized into bag-of-words grids
    "families": ["texton", "sift", "lqtp", "selfsim"],
    "codebook_k": 512,
    "descriptor_params": {},     # per-family keyword overrides
    "kmeans_stride": 7,          # pixel stride when collecting k-means samples
    "bow_factor": 4,             # sub-sampling factor of the BoW grids
    "rects": {
        "count": 200,
        "max_extent": 100,
        "seed": 0,
    },
    "boost": {
        "rounds": 5000,
        "dims_per_round": 400,
        "neg_ratio": 50,
        "absolute": False,
        "max_positives": None,   # per-pair positive subsampling cap
    },
    "stereo": {
        "d_max": 128,
    },
    "flow": {
        "window": [-20, 20, -20, 20],   # fx0, fx1, fy0, fy1
        "downsample": 4,                # evaluation protocol factor
    },
    "change_threshold": 0.0,
    "validate_tol": 1.0,         # inverse-matching consistency tolerance (px)
    "crf": {
        "sigma_app": 8.0,
        "sigma_loc": 21.0,
        "sigma_pln": 1.5,
        "sigma": 1.0,
        "pairwise_weight": 1.0,
        "max_iters": 20,
        "ransac_iters": 64,
        "radius": None,
    },
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ValueError("unknown config key %r" % (path + key))
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, path + key + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def load_config(path: Optional[str] = None) -> dict:
    """Defaults overlaid with the file's entries; unknown keys and schema
    mismatches are errors."""
    if path is None:
        return default_config()
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping: %s" % path)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError("unsupported config schema version %r" % version)
    return _merge(DEFAULTS, data)


def save_config(cfg: dict, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True, default_flow_style=False)
