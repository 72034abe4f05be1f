"""Detection quality metrics: matching, PR curves, AP, and counting.

Two matching protocols are supported, mirroring the two ground-truth
styles: point evaluation (a detection is correct when it contains an
unmatched head point) and box evaluation (greedy IoU matching at a fixed
minimum, default 0.4). Matched detections become scored TP/FP samples;
unmatched ground truths are carried as a false-negative count because
they have no confidence score of their own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import DetectionBox, Point, iou

DEFAULT_IOU_MIN = 0.4


@dataclass(frozen=True)
class MatchSample:
    """One scored detection verdict."""

    score: float
    is_tp: bool
    frame_index: int = 0


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall swept over descending score thresholds."""

    thresholds: tuple[float, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True)
class CountReport:
    """Per-frame predicted vs true counts with aggregates."""

    frames: tuple[tuple[int, int, int], ...]  # (frame_index, predicted, true)
    exact_match_rate: float
    mean_absolute_error: float
    max_error: int


def _det_order(det: DetectionBox) -> tuple:
    return (-det.score, det.x, det.y, det.w, det.h)


def match_points(
    dets: list[DetectionBox], gts: list[Point]
) -> tuple[list[MatchSample], int]:
    """Point-in-box matching for head-point ground truth.

    Detections are taken in descending score order; each claims the
    nearest-to-centre unmatched point it contains. Leftover points are
    false negatives, leftover detections false positives.
    """
    samples: list[MatchSample] = []
    unmatched = list(range(len(gts)))
    for det in sorted(dets, key=_det_order):
        best = None
        best_d2 = None
        cx, cy = det.center
        for idx in unmatched:
            px, py = gts[idx]
            if det.contains((px, py)):
                d2 = (px - cx) ** 2 + (py - cy) ** 2
                if best_d2 is None or d2 < best_d2:
                    best, best_d2 = idx, d2
        if best is not None:
            unmatched.remove(best)
        samples.append(MatchSample(det.score, best is not None, det.frame_index))
    return samples, len(unmatched)


def match_iou(
    dets: list[DetectionBox],
    gts: list[DetectionBox],
    iou_min: float = DEFAULT_IOU_MIN,
) -> tuple[list[MatchSample], int]:
    """Greedy box matching: each detection claims the unmatched ground
    truth with the highest IoU at or above ``iou_min``."""
    samples: list[MatchSample] = []
    unmatched = list(range(len(gts)))
    for det in sorted(dets, key=_det_order):
        best = None
        best_iou = 0.0
        for idx in unmatched:
            overlap = iou(det, gts[idx])
            if overlap < iou_min:
                continue
            if (
                best is None
                or overlap > best_iou
                or (overlap == best_iou
                    and (gts[idx].x, gts[idx].y) < (gts[best].x, gts[best].y))
            ):
                best, best_iou = idx, overlap
        if best is not None:
            unmatched.remove(best)
        samples.append(MatchSample(det.score, best is not None, det.frame_index))
    return samples, len(unmatched)


def pr_curve(samples: list[MatchSample], fn_count: int) -> PRCurve:
    """Sweep every distinct score descending and tabulate P/R/F1.

    ``fn_count`` is the number of ground truths never matched at any
    threshold; total ground truth is that plus all TP samples. Zero
    detections yield an empty curve.
    """
    if not samples:
        return PRCurve((), (), (), ())
    total_gt = sum(1 for s in samples if s.is_tp) + fn_count
    ordered = sorted(samples, key=lambda s: -s.score)
    thresholds: list[float] = []
    precision: list[float] = []
    recall: list[float] = []
    f1: list[float] = []
    tp = fp = 0
    n = len(ordered)
    for i, sample in enumerate(ordered):
        if sample.is_tp:
            tp += 1
        else:
            fp += 1
        if i + 1 < n and ordered[i + 1].score == sample.score:
            continue  # rows only at distinct thresholds
        p = tp / (tp + fp)
        r = tp / total_gt if total_gt else 0.0
        thresholds.append(sample.score)
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    return PRCurve(tuple(thresholds), tuple(precision), tuple(recall), tuple(f1))


def average_precision(curve: PRCurve) -> float:
    """Area under the PR curve with the all-point precision envelope."""
    if len(curve) == 0:
        return 0.0
    recall = np.concatenate(([0.0], np.asarray(curve.recall)))
    precision = np.concatenate(([0.0], np.asarray(curve.precision)))
    # Non-increasing envelope from the right.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    deltas = np.diff(recall)
    return float(np.sum(deltas * envelope[1:]))


def count_report(
    frames: list[tuple[int, int, int]],
) -> CountReport:
    """Aggregate (frame_index, predicted, true) rows into count metrics."""
    if not frames:
        return CountReport((), 1.0, 0.0, 0)
    errors = [abs(pred - true) for _, pred, true in frames]
    return CountReport(
        frames=tuple(frames),
        exact_match_rate=sum(1 for e in errors if e == 0) / len(errors),
        mean_absolute_error=sum(errors) / len(errors),
        max_error=max(errors),
    )
