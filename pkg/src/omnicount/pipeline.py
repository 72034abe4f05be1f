"""End-to-end flows behind the CLI subcommands.

Each function is importable and deterministic given (config, dataset,
seed); the CLI is a thin argv wrapper around these.
"""

from __future__ import annotations

import json
import logging
from contextlib import ExitStack
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO

import numpy as np

from .annotations import (
    CountFilter,
    FrameAnnotation,
    denormalize_boxes,
    fuse_to_omni,
    normalize_boxes,
    read_annotations,
    select_threshold_f1,
    write_annotations,
)
from .boxes import DetectionBox
from .config import DatasetManifest, SceneConfig, iter_frames
from .errors import ConfigError, PipelineError, ProtocolError, ProviderTimeoutError
from .evaluate import (
    MatchSample,
    average_precision,
    count_report,
    match_iou,
    match_points,
    pr_curve,
)
from .frames import OmniFrame, crop_square, to_gray, write_pnm
from .geometry import FragmentMap, OmniCameraModel, build_fragment_maps, unwarp_frame
from .providers import ProviderPool, harvest_fragments
from .temporal import FrameRing, ScalePlan, apply_scale_plan, downscale, upscale_linear

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountRecord:
    """One occupancy measurement; boxes are omitted in privacy mode."""

    timestamp: float
    frame_index: int
    count: int
    boxes: tuple | None = None

    def to_json(self) -> str:
        record = {"ts": self.timestamp, "frame": self.frame_index, "count": self.count}
        if self.boxes is not None:
            record["boxes"] = [list(b) for b in self.boxes]
        return json.dumps(record)


def run_unwarp(
    config: SceneConfig, manifest: DatasetManifest, out_dir: str | Path
) -> list[Path]:
    """Write every fragment of every frame as fragment_<frame>_<i>.ppm."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps = build_fragment_maps(config.camera, config.unwarp)
    written = []
    for frame in iter_frames(manifest, config.fps):
        for fmap in maps:
            fragment = unwarp_frame(frame, fmap)
            path = out_dir / f"fragment_{frame.index}_{fmap.fragment_index}.ppm"
            write_pnm(path, fragment.pixels)
            written.append(path)
    return written


@dataclass
class AnnotateResult:
    annotations: list[FrameAnnotation]
    frames_total: int = 0
    frames_failed: int = 0

    @property
    def error_rate(self) -> float:
        return self.frames_failed / self.frames_total if self.frames_total else 0.0


def run_annotate(
    config: SceneConfig,
    manifest: DatasetManifest,
    out_path: str | Path | None = None,
    min_score: float | None = None,
) -> AnnotateResult:
    """Harvest -> fuse -> count-filter over the stream; write annotations.

    Provider failures mark the frame as skipped (recorded with the error,
    never silently dropped) and the run continues. ``min_score`` drops
    low-confidence boxes before counting, for the workflow where a
    threshold was already selected on an earlier pass.
    """
    if not config.providers:
        raise ConfigError("annotate needs at least one provider in the scene config")
    result = AnnotateResult(annotations=[])
    count_filter = CountFilter(config.count_window, config.count_tolerance)
    with ExitStack() as stack:
        pools = []
        maps_by_provider: dict[str, list[FragmentMap]] = {}
        for spec in config.providers:
            pools.append(stack.enter_context(ProviderPool(spec, config.workers)))
            maps_by_provider[spec.name] = build_fragment_maps(
                config.camera, config.unwarp_for(spec)
            )
        for frame in iter_frames(manifest, config.fps):
            result.frames_total += 1
            try:
                harvests = [
                    harvest_fragments(frame, pool, maps_by_provider[pool.spec.name])
                    for pool in pools
                ]
            except (ProviderTimeoutError, ProtocolError) as exc:
                log.warning("frame %d skipped: %s", frame.index, exc)
                result.frames_failed += 1
                result.annotations.append(
                    FrameAnnotation(
                        frame_index=frame.index,
                        timestamp=frame.timestamp,
                        boxes=(),
                        accepted=False,
                        error=str(exc),
                    )
                )
                continue
            boxes = fuse_to_omni(
                harvests,
                maps_by_provider,
                nms_threshold=config.nms_threshold,
                pose_min_conf=config.pose_min_conf,
                pose_expand=config.pose_expand,
            )
            if min_score is not None:
                boxes = [b for b in boxes if b.score >= min_score]
            accepted = count_filter.update(len(boxes))
            result.annotations.append(
                FrameAnnotation(
                    frame_index=frame.index,
                    timestamp=frame.timestamp,
                    boxes=normalize_boxes(
                        boxes, config.camera.image_width, config.camera.image_height
                    ),
                    accepted=accepted,
                )
            )
    if out_path is not None:
        write_annotations(result.annotations, out_path)
    return result


def _degraded_stream(config: SceneConfig, manifest: DatasetManifest, plan: ScalePlan):
    """Yield (original frame, reconstructed frame at net_res) pairs.

    Until the ring holds enough history for the kernel, interlaced plans
    fall back to plain linear upscaling.
    """
    warmup = plan.kernel.max_age if plan.kernel is not None else 0
    ring = FrameRing(capacity=max(warmup + 1, 2), fps=config.fps)
    linear_plan = replace(plan, mode="linear", kernel=None)
    for frame in iter_frames(manifest, config.fps):
        gray = to_gray(crop_square(frame.pixels))
        low = downscale(OmniFrame(gray, frame.index, frame.timestamp), plan.scale_res)
        ring.push(low)
        active = plan if len(ring) > warmup else linear_plan
        yield frame, apply_scale_plan(ring, active)


def run_degrade(
    config: SceneConfig,
    manifest: DatasetManifest,
    plan: ScalePlan,
    out_dir: str | Path,
) -> list[Path]:
    """Downscale + reconstruct every frame; write recon_<frame>.pgm files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for frame, recon in _degraded_stream(config, manifest, plan):
        path = out_dir / f"recon_{frame.index}.pgm"
        write_pnm(path, recon.pixels)
        written.append(path)
    return written


def _scaled_camera(camera: OmniCameraModel, net_res: int) -> OmniCameraModel:
    """Camera circle after the square crop and resize to net_res."""
    side = min(camera.image_width, camera.image_height)
    x0 = (camera.image_width - side) // 2
    y0 = (camera.image_height - side) // 2
    s = net_res / side
    return OmniCameraModel(
        center_x=(camera.center_x - x0) * s,
        center_y=(camera.center_y - y0) * s,
        radius_inner=camera.radius_inner * s,
        radius_outer=min(camera.radius_outer * s, net_res / 2 + 1),
        image_width=net_res,
        image_height=net_res,
    )


def run_count(
    config: SceneConfig,
    manifest: DatasetManifest,
    out_stream: IO[str] | None = None,
    privacy: bool = False,
    plan: ScalePlan | None = None,
) -> tuple[list[CountRecord], int, int]:
    """Count-by-detection over the stream.

    With a scale plan, frames are degraded and reconstructed before
    detection (the privacy path); otherwise detectors see full-resolution
    fragments. Returns (records, frames_total, frames_failed).
    """
    if not config.providers:
        raise ConfigError("count needs at least one provider in the scene config")
    camera = _scaled_camera(config.camera, plan.net_res) if plan else config.camera
    records: list[CountRecord] = []
    frames_total = 0
    frames_failed = 0
    count_filter = CountFilter(config.count_window, config.count_tolerance)
    with ExitStack() as stack:
        pools = []
        maps_by_provider: dict[str, list[FragmentMap]] = {}
        for spec in config.providers:
            pools.append(stack.enter_context(ProviderPool(spec, config.workers)))
            maps_by_provider[spec.name] = build_fragment_maps(
                camera, config.unwarp_for(spec)
            )
        if plan is not None:
            stream = (
                (frame.index, frame.timestamp, recon)
                for frame, recon in _degraded_stream(config, manifest, plan)
            )
        else:
            stream = (
                (frame.index, frame.timestamp, frame)
                for frame in iter_frames(manifest, config.fps)
            )
        for index, timestamp, detect_frame in stream:
            if index % config.count_cadence != 0:
                continue
            frames_total += 1
            try:
                harvests = [
                    harvest_fragments(
                        detect_frame.with_pixels(
                            detect_frame.pixels
                            if detect_frame.pixels.dtype == np.uint8
                            else np.clip(np.rint(detect_frame.pixels), 0, 255).astype(np.uint8)
                        ),
                        pool,
                        maps_by_provider[pool.spec.name],
                    )
                    for pool in pools
                ]
            except (ProviderTimeoutError, ProtocolError) as exc:
                log.warning("frame %d skipped: %s", index, exc)
                frames_failed += 1
                continue
            boxes = fuse_to_omni(
                harvests,
                maps_by_provider,
                nms_threshold=config.nms_threshold,
                pose_min_conf=config.pose_min_conf,
                pose_expand=config.pose_expand,
            )
            count_filter.update(len(boxes))
            record = CountRecord(
                timestamp=timestamp,
                frame_index=index,
                count=len(boxes),
                boxes=None if privacy else normalize_boxes(
                    boxes, camera.image_width, camera.image_height
                ),
            )
            records.append(record)
            if out_stream is not None:
                out_stream.write(record.to_json() + "\n")
                out_stream.flush()
    return records, frames_total, frames_failed


def _norm_box_objects(annotation: FrameAnnotation) -> list[DetectionBox]:
    """Annotation boxes as DetectionBox in normalized [0,1] units."""
    return denormalize_boxes(annotation, 1.0, 1.0)


def run_evaluate(
    pred_path: str | Path,
    gt_path: str | Path,
    mode: str,
    out_dir: str | Path | None = None,
    iou_min: float = 0.4,
    include_dropped: bool = False,
) -> dict:
    """Match predictions against ground truth; emit CSVs and a summary.

    ``mode`` is "point" (detection box must contain the head point) or
    "iou" (greedy box matching at ``iou_min``). Matching runs in
    normalized coordinates, which both protocols are invariant to.
    """
    if mode not in ("point", "iou"):
        raise ConfigError(f"unknown evaluation mode {mode!r}")
    preds = read_annotations(pred_path)
    gts = {ann.frame_index: ann for ann in read_annotations(gt_path)}

    if mode == "point" and all(g.points is None for g in gts.values()):
        raise ConfigError(
            "ground truth has no head points; use --mode iou or convert "
            "the box annotations to head points first"
        )

    samples: list[MatchSample] = []
    fn_total = 0
    evaluated = []
    for pred in preds:
        if not include_dropped and (not pred.accepted or pred.error is not None):
            continue
        gt = gts.get(pred.frame_index)
        if gt is None:
            continue
        evaluated.append((pred, gt))
        det_boxes = _norm_box_objects(pred)
        if mode == "point":
            frame_samples, fn = match_points(det_boxes, list(gt.points or ()))
        else:
            frame_samples, fn = match_iou(det_boxes, _norm_box_objects(gt), iou_min)
        samples.extend(frame_samples)
        fn_total += fn

    curve = pr_curve(samples, fn_total)
    ap = average_precision(curve)
    if samples:
        threshold = select_threshold_f1(samples, fn_total)
        tp = sum(1 for s in samples if s.is_tp and s.score >= threshold)
        fp = sum(1 for s in samples if not s.is_tp and s.score >= threshold)
        total_gt = sum(1 for s in samples if s.is_tp) + fn_total
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / total_gt if total_gt else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    else:
        threshold, precision, recall, f1 = 0.0, 0.0, 0.0, 0.0

    count_rows = [
        (
            pred.frame_index,
            sum(1 for b in pred.boxes if b[4] >= threshold),
            len(gt.points if mode == "point" and gt.points is not None else gt.boxes),
        )
        for pred, gt in evaluated
    ]
    counts = count_report(count_rows)

    summary = {
        "mode": mode,
        "frames_evaluated": len(evaluated),
        "samples": len(samples),
        "false_negatives": fn_total,
        "average_precision": ap,
        "best_threshold": threshold,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "counts": {
            "exact_match_rate": counts.exact_match_rate,
            "mean_absolute_error": counts.mean_absolute_error,
            "max_error": counts.max_error,
        },
    }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "pr_curve.csv", "w", encoding="utf-8") as fh:
            fh.write("threshold,precision,recall,f1\n")
            for row in zip(curve.thresholds, curve.precision, curve.recall, curve.f1):
                fh.write(",".join(repr(v) for v in row) + "\n")
        with open(out_dir / "counts.csv", "w", encoding="utf-8") as fh:
            fh.write("frame,predicted,true\n")
            for frame_index, predicted, true in counts.frames:
                fh.write(f"{frame_index},{predicted},{true}\n")
        with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return summary
