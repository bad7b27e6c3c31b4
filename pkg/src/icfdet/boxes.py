"""Boxes, detections, annotations and the overlap measures used throughout."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left corner plus size, in pixels (fractional ok)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box needs positive size, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: BoundingBox
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"detection score must be finite, got {self.score}")


@dataclass(frozen=True)
class Annotation:
    image_id: str
    box: BoundingBox
    ignore: bool = False

    @property
    def height(self) -> float:
        return self.box.h


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def overlap_min(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over the smaller box's area (suppression overlap)."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / min(a.area, b.area)


def inflate_to_aspect(box: BoundingBox, aspect: float) -> BoundingBox:
    """Grow `box` about its center until w/h == aspect (never shrinks a side)."""
    if box.w / box.h < aspect:
        w = box.h * aspect
        return BoundingBox(box.x - (w - box.w) / 2.0, box.y, w, box.h)
    h = box.w / aspect
    return BoundingBox(box.x, box.y - (h - box.h) / 2.0, box.w, h)
