"""Bounding boxes, IoU, greedy NMS, and the detection image pyramid."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

BASE_WINDOW = 12  # smallest detector window, px


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner, extent, and a score in [0, 1]."""

    x: float
    y: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got w={self.w} h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def with_score(self, score: float) -> "BoundingBox":
        return replace(self, score=score)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(x=d["x"], y=d["y"], w=d["w"], h=d["h"], score=d.get("score", 1.0))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    if (a.x, a.y, a.w, a.h) == (b.x, b.y, b.w, b.h):
        return 1.0  # identical rectangles, exact despite x + w rounding
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    # The intersection can never exceed either area; clamping keeps the
    # ratio within [0, 1] against rounding in x + w - x.
    inter = min(ix * iy, a.area, b.area)
    return inter / (a.area + b.area - inter)


def nms(boxes: Sequence[BoundingBox], iou_threshold: float) -> list[BoundingBox]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-score box and discards remaining boxes
    overlapping it with IoU strictly above the threshold. Equal scores
    break ties by input order, and the result is score-descending.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[BoundingBox] = []
    suppressed = [False] * len(boxes)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(boxes[i])
        for j in order:
            if not suppressed[j] and j != i and iou(boxes[i], boxes[j]) > iou_threshold:
                suppressed[j] = True
    return kept


def image_pyramid(
    width: int,
    height: int,
    min_face: int = 20,
    scale_factor: float = 0.709,
) -> list[float]:
    """Descending scale series for the sliding-window stage.

    The first scale maps a min_face-sized face onto the base 12 px
    window; each further level multiplies by scale_factor, stopping once
    the shorter image side would fall below the base window.
    """
    if min_face < BASE_WINDOW:
        raise ValueError(f"min_face must be >= {BASE_WINDOW}, got {min_face}")
    if not 0.0 < scale_factor < 1.0:
        raise ValueError(f"scale_factor must lie in (0, 1), got {scale_factor}")
    short_side = min(width, height)
    if short_side < min_face:
        return []
    scales = []
    scale = BASE_WINDOW / min_face
    while short_side * scale >= BASE_WINDOW:
        scales.append(scale)
        scale *= scale_factor
    return scales
