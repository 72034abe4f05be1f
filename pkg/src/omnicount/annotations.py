"""Self-training annotation generation and its line-delimited file format.

Detections harvested from fragments are warped back onto the omni image
as poly-point sets, refit as boxes, pooled across providers, and merged
with one NMS pass. A temporal count filter drops frames whose detection
count disagrees with the recent mean, keeping the pseudo-label stream
clean. Records are stored one JSON object per line with center-format box
coordinates normalized to [0, 1] of the omni image:

    {"v": 1, "frame": n, "ts": seconds, "accepted": bool,
     "boxes": [[cx, cy, w, h, score], ...]}

Ground-truth files reuse the same format and may carry an extra "points"
array of normalized head points.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

from .boxes import DetectionBox, PolyPointSet, box_to_polypoints, clip_box, fit_box, nms, warp_polypoints
from .errors import NoKeypointsError, NoSamplesError, SchemaMismatchError
from .evaluate import MatchSample
from .geometry import FragmentMap

ANNOTATION_VERSION = 1

NormBox = tuple[float, float, float, float, float]  # cx, cy, w, h, score
NormPoint = tuple[float, float]


@dataclass(frozen=True)
class PoseDetection:
    """Keypoints of one person as reported by a pose estimator."""

    keypoints: tuple[tuple[float, float, float], ...]  # (x, y, confidence)
    fragment_index: int = 0


@dataclass(frozen=True)
class FrameAnnotation:
    """Pseudo-label (or ground-truth) record for one frame."""

    frame_index: int
    timestamp: float
    boxes: tuple[NormBox, ...] = ()
    accepted: bool = True
    points: tuple[NormPoint, ...] | None = None
    error: str | None = None


def pose_to_box(
    pose: PoseDetection, min_conf: float = 0.1, expand: float = 0.1
) -> DetectionBox:
    """Box over the confident keypoints, widened by a diagonal fraction.

    Keypoints below ``min_conf`` are ignored; the minimal box grows by
    ``expand`` times its diagonal (split evenly per side) and the score is
    the mean confidence of the keypoints kept.
    """
    kept = [(x, y) for x, y, c in pose.keypoints if c >= min_conf]
    if not kept:
        raise NoKeypointsError(
            f"pose on fragment {pose.fragment_index} has no keypoint above {min_conf}"
        )
    score = sum(c for _, _, c in pose.keypoints if c >= min_conf) / len(kept)
    xs = [p[0] for p in kept]
    ys = [p[1] for p in kept]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    pad = expand * math.hypot(x1 - x0, y1 - y0) / 2.0
    corners = PolyPointSet(
        points=((x0 - pad, y0 - pad), (x1 + pad, y1 + pad)),
        box=None,
    )
    box = fit_box(corners)
    return replace(box, score=score, fragment_index=pose.fragment_index)


def fuse_to_omni(
    harvests: list,
    maps: list[FragmentMap],
    nms_threshold: float = 0.4,
    pose_min_conf: float = 0.1,
    pose_expand: float = 0.1,
) -> list[DetectionBox]:
    """Warp every provider's detections onto the omni image and merge.

    Each box goes through poly-points -> warp -> refit; poses are boxed
    first. All providers' omni boxes are pooled and suppressed in a single
    NMS pass at ``nms_threshold``. Poses without confident keypoints are
    dropped.
    """
    by_index = {fmap.fragment_index: fmap for fmap in maps}
    width = maps[0].image_width
    height = maps[0].image_height
    pooled: list[DetectionBox] = []
    for harvest in harvests:
        boxes = list(harvest.boxes)
        for pose in harvest.poses:
            try:
                boxes.append(pose_to_box(pose, pose_min_conf, pose_expand))
            except NoKeypointsError:
                continue
        for box in boxes:
            fmap = by_index[box.fragment_index]
            warped = warp_polypoints(box_to_polypoints(box), fmap)
            omni_box = clip_box(fit_box(warped), width, height)
            if omni_box is not None:
                pooled.append(omni_box)
    return nms(pooled, nms_threshold)


class CountFilter:
    """Drop frames whose detection count deviates from the recent mean.

    The window holds the counts of recently *accepted* frames; a frame is
    accepted when its count is within ``tolerance`` of the rounded window
    mean (half away from zero). Dropped counts never enter the window. An
    empty window accepts anything, bootstrapping the mean.
    """

    def __init__(self, window_len: int = 15, tolerance: int = 0):
        if window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {window_len}")
        self.tolerance = tolerance
        self._window: deque[int] = deque(maxlen=window_len)

    @property
    def window(self) -> tuple[int, ...]:
        return tuple(self._window)

    def update(self, count: int) -> bool:
        if self._window:
            mean = sum(self._window) / len(self._window)
            if abs(count - math.floor(mean + 0.5)) > self.tolerance:
                return False
        self._window.append(count)
        return True


def select_threshold_f1(samples: list[MatchSample], fn_count: int = 0) -> float:
    """Confidence threshold maximizing F1 over the matched samples.

    Candidate thresholds are the distinct sample scores; ties break toward
    the higher threshold (fewer false positives).
    """
    if not samples:
        raise NoSamplesError("threshold selection needs at least one sample")
    total_gt = sum(1 for s in samples if s.is_tp) + fn_count
    best_threshold = 0.0
    best_f1 = -1.0
    for threshold in sorted({s.score for s in samples}):
        tp = sum(1 for s in samples if s.is_tp and s.score >= threshold)
        fp = sum(1 for s in samples if not s.is_tp and s.score >= threshold)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / total_gt if total_gt else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        if f1 >= best_f1:
            best_f1 = f1
            best_threshold = threshold
    return best_threshold


def normalize_boxes(
    boxes: list[DetectionBox], width: float, height: float
) -> tuple[NormBox, ...]:
    """Pixel boxes to center-format [0, 1] coordinates."""
    out = []
    for b in boxes:
        cx = (b.x + b.w / 2.0) / width
        cy = (b.y + b.h / 2.0) / height
        out.append((
            min(max(cx, 0.0), 1.0),
            min(max(cy, 0.0), 1.0),
            min(b.w / width, 1.0),
            min(b.h / height, 1.0),
            b.score,
        ))
    return tuple(out)


def denormalize_boxes(
    annotation: FrameAnnotation, width: float, height: float
) -> list[DetectionBox]:
    boxes = []
    for cx, cy, w, h, score in annotation.boxes:
        boxes.append(
            DetectionBox(
                x=cx * width - w * width / 2.0,
                y=cy * height - h * height / 2.0,
                w=w * width,
                h=h * height,
                score=score,
                frame_index=annotation.frame_index,
            )
        )
    return boxes


def write_annotations(annotations: list[FrameAnnotation], path: str | Path) -> None:
    """Write line-delimited records; an empty list yields an empty file."""
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            record: dict = {
                "v": ANNOTATION_VERSION,
                "frame": ann.frame_index,
                "ts": ann.timestamp,
                "accepted": ann.accepted,
                "boxes": [list(box) for box in ann.boxes],
            }
            if ann.points is not None:
                record["points"] = [list(p) for p in ann.points]
            if ann.error is not None:
                record["error"] = ann.error
            fh.write(json.dumps(record) + "\n")


def read_annotations(path: str | Path) -> list[FrameAnnotation]:
    annotations = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("v") != ANNOTATION_VERSION:
                raise SchemaMismatchError(
                    f"{path}:{line_no}: unsupported record version {record.get('v')!r}"
                )
            points = record.get("points")
            annotations.append(
                FrameAnnotation(
                    frame_index=record["frame"],
                    timestamp=record["ts"],
                    boxes=tuple(tuple(box) for box in record["boxes"]),
                    accepted=record["accepted"],
                    points=tuple(tuple(p) for p in points) if points is not None else None,
                    error=record.get("error"),
                )
            )
    return annotations
