"""Axis-aligned box arithmetic: areas, IoU, generalized IoU, size classes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import isfinite

SMALL_AREA_MAX = 32.0**2
MEDIUM_AREA_MAX = 96.0**2


class SizeClass(Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


@dataclass(frozen=True)
class BBox:
    """Box in [x, y, w, h] form, top-left origin, pixel units."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not isfinite(v):
                raise ValueError(f"non-finite box coordinate: {self!r}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent: {self!r}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


def area(b: BBox) -> float:
    return b.w * b.h


def _intersection_area(a: BBox, b: BBox) -> float:
    iw = max(min(a.x2, b.x2) - max(a.x, b.x), 0.0)
    ih = max(min(a.y2, b.y2) - max(a.y, b.y), 0.0)
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0.0 when the union is empty."""
    if a == b:
        # corner arithmetic can round w - (x+w)+x away from w; keep
        # self-overlap exact
        return 1.0 if area(a) > 0.0 else 0.0
    inter = _intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the hull fraction not covered by the union.

    Lies in (-1, 1]; equals IoU exactly when the enclosing hull coincides
    with the union. Both operands having zero area is rejected because the
    hull ratio is undefined there.
    """
    a_area = area(a)
    b_area = area(b)
    if a_area == 0.0 and b_area == 0.0:
        raise ValueError("giou undefined for two zero-area boxes")
    if a == b:
        return 1.0  # hull coincides with the union exactly
    inter = _intersection_area(a, b)
    union = a_area + b_area - inter
    hull_w = max(a.x2, b.x2) - min(a.x, b.x)
    hull_h = max(a.y2, b.y2) - min(a.y, b.y)
    hull = hull_w * hull_h
    base = inter / union if union > 0.0 else 0.0
    return base - (hull - union) / hull


def size_class(b: BBox) -> SizeClass:
    return area_class(area(b))


def area_class(box_area: float) -> SizeClass:
    """COCO-style strata: small < 32^2 <= medium < 96^2 <= large."""
    if box_area < SMALL_AREA_MAX:
        return SizeClass.SMALL
    if box_area < MEDIUM_AREA_MAX:
        return SizeClass.MEDIUM
    return SizeClass.LARGE
