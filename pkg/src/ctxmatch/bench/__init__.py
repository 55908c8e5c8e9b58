"""Dataset adapters, synthetic generators, metrics and output encodings."""

from ctxmatch.bench.io import (
    load_image_rgb,
    save_image_rgb,
    load_kitti_disparity,
    save_disparity,
    read_flow,
    write_flow,
    flow_colorize,
    load_pair,
    save_pair,
)
from ctxmatch.bench.metrics import stereo_metrics, change_metrics, flow_metrics
from ctxmatch.bench.synth import synth_generate

__all__ = [
    "load_image_rgb",
    "save_image_rgb",
    "load_kitti_disparity",
    "save_disparity",
    "read_flow",
    "write_flow",
    "flow_colorize",
    "load_pair",
    "save_pair",
    "stereo_metrics",
    "change_metrics",
    "flow_metrics",
    "synth_generate",
]
