"""Ground-truth containers shared by training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ctxmatch.grid import Image


@dataclass(frozen=True)
class DisparityMap:
    values: np.ndarray  # (H, W) float, pixels with valid=False carry no label
    valid: np.ndarray   # (H, W) bool


@dataclass(frozen=True)
class FlowField:
    values: np.ndarray  # (H, W, 2) float (u, v)
    valid: np.ndarray   # (H, W) bool


@dataclass(frozen=True)
class ChangeMask:
    values: np.ndarray  # (H, W) bool, True = structural change
    valid: np.ndarray   # (H, W) bool


GroundTruth = Union[DisparityMap, FlowField, ChangeMask]


@dataclass(frozen=True)
class DatasetPair:
    image1: Image
    image2: Image
    ground_truth: GroundTruth
    occlusion: Optional[np.ndarray] = None  # (H, W) bool, True = occluded

    def __post_init__(self):
        if (self.image1.width, self.image1.height) != (self.image2.width, self.image2.height):
            raise ValueError("image pair must be same size")

    @property
    def task(self) -> str:
        if isinstance(self.ground_truth, DisparityMap):
            return "stereo"
        if isinstance(self.ground_truth, FlowField):
            return "flow"
        return "change"
