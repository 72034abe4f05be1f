"""Detection boxes, poly-point warping helpers, IoU, and greedy NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DegenerateBoxError, EmptyPointSetError
from .geometry import FragmentMap, fragment_to_omni

Point = tuple[float, float]


@dataclass(frozen=True)
class DetectionBox:
    """Scored axis-aligned box, top-left origin, pixel units."""

    x: float
    y: float
    w: float
    h: float
    score: float = 1.0
    source: str = ""
    frame_index: int = 0
    fragment_index: int | None = None

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBoxError(f"box {self.w}x{self.h} has non-positive size")

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
    def center(self) -> Point:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains(self, point: Point) -> bool:
        return self.x <= point[0] <= self.x2 and self.y <= point[1] <= self.y2


@dataclass(frozen=True)
class PolyPointSet:
    """Boundary points of a detection, carried through warping."""

    points: tuple[Point, ...]
    box: DetectionBox | None = None


def box_to_polypoints(box: DetectionBox) -> PolyPointSet:
    """Expand a box to 10 boundary points, dropping the top corners.

    Keeps the bottom corners and adds two evenly spaced interior points
    (at 1/3 and 2/3) on every side; the top corners are omitted because
    they balloon the refit box after warping.
    """
    x, y, w, h = box.x, box.y, box.w, box.h
    thirds = (1.0 / 3.0, 2.0 / 3.0)
    points = [
        (x, y + h),          # bottom-left corner
        (x + w, y + h),      # bottom-right corner
    ]
    points += [(x + w * t, y) for t in thirds]          # top side
    points += [(x + w, y + h * t) for t in thirds]      # right side
    points += [(x + w * t, y + h) for t in thirds]      # bottom side
    points += [(x, y + h * t) for t in thirds]          # left side
    return PolyPointSet(points=tuple(points), box=box)


def warp_polypoints(pps: PolyPointSet, fmap: FragmentMap) -> PolyPointSet:
    """Warp every point from fragment to omni coordinates.

    Points are clamped into the fragment bounds first so boxes that spill
    over a fragment edge still warp.
    """
    w_max = fmap.width - 1
    h_max = fmap.height - 1
    warped = tuple(
        fragment_to_omni((min(max(px, 0.0), w_max), min(max(py, 0.0), h_max)), fmap)
        for px, py in pps.points
    )
    return PolyPointSet(points=warped, box=pps.box)


def fit_box(pps: PolyPointSet) -> DetectionBox:
    """Smallest axis-aligned box around the points; score inherited.

    A zero-extent axis is floored to 1 px centred on the points, since
    zero-area boxes would break IoU downstream.
    """
    if not pps.points:
        raise EmptyPointSetError("cannot fit a box around zero points")
    xs = [p[0] for p in pps.points]
    ys = [p[1] for p in pps.points]
    x, w = _extent(min(xs), max(xs))
    y, h = _extent(min(ys), max(ys))
    src = pps.box
    if src is not None:
        return DetectionBox(
            x, y, w, h,
            score=src.score, source=src.source,
            frame_index=src.frame_index, fragment_index=src.fragment_index,
        )
    return DetectionBox(x, y, w, h)


def _extent(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo <= 0.0:
        mid = (lo + hi) / 2.0
        return mid - 0.5, 1.0
    return lo, hi - lo


def clip_box(box: DetectionBox, width: float, height: float) -> DetectionBox | None:
    """Intersect with image bounds; None if nothing remains."""
    x1 = max(box.x, 0.0)
    y1 = max(box.y, 0.0)
    x2 = min(box.x2, float(width))
    y2 = min(box.y2, float(height))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return replace(box, x=x1, y=y1, w=x2 - x1, h=y2 - y1)


def iou(a: DetectionBox, b: DetectionBox) -> float:
    """Intersection area over union area."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _nms_key(box: DetectionBox) -> tuple:
    frag = box.fragment_index if box.fragment_index is not None else math.inf
    return (-box.score, frag, box.x, box.y)


def nms(boxes: list[DetectionBox], threshold: float) -> list[DetectionBox]:
    """Greedy score-descending suppression.

    Keep the highest-scoring box, drop every box overlapping it with
    IoU > threshold, repeat. Equal scores break toward the lower fragment
    index, then lexicographic (x, y), so the result is deterministic.
    """
    pending = sorted(boxes, key=_nms_key)
    kept: list[DetectionBox] = []
    while pending:
        best = pending.pop(0)
        kept.append(best)
        pending = [b for b in pending if iou(best, b) <= threshold]
    return kept
