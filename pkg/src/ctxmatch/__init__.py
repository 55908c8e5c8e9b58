"""Boosted contextual pixel matching for stereo, optical flow and change detection."""

from ctxmatch.grid import Image, Rectangle, IntegralGrid, to_cielab, build_integral, rect_sum
from ctxmatch.backend import backend_name

__version__ = "0.1.0"

__all__ = [
    "Image",
    "Rectangle",
    "IntegralGrid",
    "to_cielab",
    "build_integral",
    "rect_sum",
    "backend_name",
    "__version__",
]
