"""Synthetic omni scenes with known ground truth.

Persons are drawn as radially-oriented capsules (a segment along the
radius with rounded caps), which is exactly the shape the polar unwarp
straightens into an upright blob, so a plain blob detector on the
fragments acts as a stand-in for a real person detector. Ground truth is
emitted both as omni bounding boxes and as head points (the outer end of
each capsule), in the annotation file format.

Rendering is a pure function of (scene, frame_index): reruns are
byte-identical for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import FrameAnnotation, normalize_boxes, write_annotations
from .boxes import DetectionBox, Point
from .errors import ConfigError
from .frames import OmniFrame, write_pnm
from .geometry import OmniCameraModel

# Tangential speed targets in low-resolution pixels per frame, referenced
# to a 32 px downscale of the omni frame.
MOVEMENT_SPEEDS = {"limited": 0.1, "moderate": 0.8, "high": 2.2}
SPEED_REFERENCE_RES = 32


@dataclass(frozen=True)
class PersonTrack:
    """Circular track of one rendered person."""

    angle0: float
    angular_speed: float  # radians per frame
    r_feet: float
    r_head: float
    half_width: float
    intensity: float

    def angle_at(self, frame_index: int) -> float:
        return self.angle0 + self.angular_speed * frame_index

    def endpoints(self, frame_index: int, cx: float, cy: float) -> tuple[Point, Point]:
        theta = self.angle_at(frame_index)
        d = (math.cos(theta), math.sin(theta))
        return (
            (cx + self.r_feet * d[0], cy + self.r_feet * d[1]),
            (cx + self.r_head * d[0], cy + self.r_head * d[1]),
        )


@dataclass(frozen=True)
class SyntheticScene:
    camera: OmniCameraModel
    persons: tuple[PersonTrack, ...]
    movement: str
    noise: float
    background: float
    seed: int


def default_camera(image_size: int = 448) -> OmniCameraModel:
    """Centered camera circle covering most of a square image."""
    return OmniCameraModel(
        center_x=image_size / 2,
        center_y=image_size / 2,
        radius_inner=image_size * 0.09,
        radius_outer=image_size / 2 - 2,
        image_width=image_size,
        image_height=image_size,
    )


def make_scene(
    camera: OmniCameraModel,
    person_count: int,
    movement: str = "moderate",
    noise: float = 0.0,
    seed: int = 0,
    foreground: float = 210.0,
    background: float = 60.0,
) -> SyntheticScene:
    """Place evenly spaced persons on a rigidly rotating carousel.

    All persons share one angular speed, sized so the slowest-moving point
    of each body meets the movement level's displacement target at the
    reference downscale resolution; rigid rotation keeps the angular gaps
    constant so persons never merge.
    """
    if movement not in MOVEMENT_SPEEDS:
        raise ConfigError(f"unknown movement level {movement!r}")
    if person_count < 0:
        raise ConfigError("person_count must be >= 0")
    rng = np.random.default_rng(seed)
    band = camera.radius_outer - camera.radius_inner
    half_width = max(4.0, 0.075 * band)
    margin = half_width + 2.0
    r_head = camera.radius_outer - margin
    r_feet = max(camera.radius_inner + margin, r_head - 0.45 * band)
    r_mid = (r_feet + r_head) / 2.0

    side = min(camera.image_width, camera.image_height)
    speed_px = MOVEMENT_SPEEDS[movement] * side / SPEED_REFERENCE_RES
    angular_speed = speed_px / r_mid

    persons = []
    for i in range(person_count):
        jitter = rng.uniform(-0.25, 0.25) * (2 * math.pi / max(person_count, 1))
        persons.append(
            PersonTrack(
                angle0=2 * math.pi * i / max(person_count, 1) + jitter,
                angular_speed=angular_speed,
                r_feet=r_feet,
                r_head=r_head,
                half_width=half_width,
                intensity=foreground - 6.0 * (i % 4),
            )
        )
    return SyntheticScene(
        camera=camera,
        persons=tuple(persons),
        movement=movement,
        noise=noise,
        background=background,
        seed=seed,
    )


def _draw_capsule(
    canvas: np.ndarray, p0: Point, p1: Point, radius: float, value: float
) -> None:
    """Paint a capsule with a one-pixel soft edge, windowed for speed."""
    h, w = canvas.shape
    x_lo = max(int(math.floor(min(p0[0], p1[0]) - radius - 1)), 0)
    x_hi = min(int(math.ceil(max(p0[0], p1[0]) + radius + 2)), w)
    y_lo = max(int(math.floor(min(p0[1], p1[1]) - radius - 1)), 0)
    y_hi = min(int(math.ceil(max(p0[1], p1[1]) + radius + 2)), h)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    ax, ay = p0
    bx, by = p1
    dx, dy = bx - ax, by - ay
    length_sq = dx * dx + dy * dy
    if length_sq == 0:
        t = np.zeros_like(xs, dtype=np.float64)
    else:
        t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / length_sq, 0.0, 1.0)
    dist = np.hypot(xs - (ax + t * dx), ys - (ay + t * dy))
    coverage = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    window = canvas[y_lo:y_hi, x_lo:x_hi]
    np.maximum(window, window + coverage * (value - window), out=window)


def render_frame(scene: SyntheticScene, frame_index: int) -> OmniFrame:
    camera = scene.camera
    canvas = np.full(
        (camera.image_height, camera.image_width), scene.background, dtype=np.float64
    )
    for person in scene.persons:
        p0, p1 = person.endpoints(frame_index, camera.center_x, camera.center_y)
        _draw_capsule(canvas, p0, p1, person.half_width, person.intensity)
    if scene.noise > 0:
        rng = np.random.default_rng((scene.seed, frame_index))
        canvas += rng.uniform(-scene.noise, scene.noise, canvas.shape)
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return OmniFrame(pixels, index=frame_index, timestamp=0.0)


def ground_truth_for(
    scene: SyntheticScene, frame_index: int
) -> tuple[list[DetectionBox], list[Point]]:
    """Omni-pixel boxes and head points for one frame."""
    camera = scene.camera
    boxes = []
    heads = []
    for person in scene.persons:
        p0, p1 = person.endpoints(frame_index, camera.center_x, camera.center_y)
        hw = person.half_width
        x0 = min(p0[0], p1[0]) - hw
        x1 = max(p0[0], p1[0]) + hw
        y0 = min(p0[1], p1[1]) - hw
        y1 = max(p0[1], p1[1]) + hw
        boxes.append(DetectionBox(x0, y0, x1 - x0, y1 - y0, frame_index=frame_index))
        heads.append(p1)  # outer capsule end
    return boxes, heads


def render_dataset(
    scene: SyntheticScene,
    n_frames: int,
    out_dir: str | Path,
    fps: float = 15.0,
) -> tuple[list[Path], Path]:
    """Write frames plus a ground-truth annotation file; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = scene.camera.image_width
    height = scene.camera.image_height
    frame_paths = []
    records = []
    for i in range(n_frames):
        frame = render_frame(scene, i)
        path = out_dir / f"frame_{i:05d}.pgm"
        write_pnm(path, frame.pixels)
        frame_paths.append(path)
        boxes, heads = ground_truth_for(scene, i)
        records.append(
            FrameAnnotation(
                frame_index=i,
                timestamp=i / fps,
                boxes=normalize_boxes(boxes, width, height),
                accepted=True,
                points=tuple((hx / width, hy / height) for hx, hy in heads),
            )
        )
    gt_path = out_dir / "ground_truth.jsonl"
    write_annotations(records, gt_path)
    return frame_paths, gt_path


def moving_block_frames(
    size: int,
    n_frames: int,
    speed: float,
    block: int = 6,
    foreground: float = 220.0,
    background: float = 40.0,
) -> list[OmniFrame]:
    """Low-resolution frames of one block drifting at constant velocity.

    The block wraps around horizontally; sub-pixel positions are drawn
    with area coverage so motion is smooth at any speed.
    """
    frames = []
    row = size // 2 - block // 2
    for i in range(n_frames):
        canvas = np.full((size, size), background, dtype=np.float64)
        x = (i * speed) % size
        cols = np.arange(size, dtype=np.float64)
        # Coverage of [x, x+block) over each unit column, with wraparound.
        cov = np.zeros(size)
        for shift in (0.0, size):
            lo = x - shift
            cov += np.clip(np.minimum(cols + 1, lo + block) - np.maximum(cols, lo), 0.0, 1.0)
        cov = np.clip(cov, 0.0, 1.0)
        canvas[row:row + block, :] += cov[None, :] * (foreground - background)
        frames.append(OmniFrame(canvas, index=i, timestamp=i / 15.0))
    return frames


def swept_mask(
    size: int, frames: list[int], speed: float, block: int = 6, pad: int = 1
) -> np.ndarray:
    """Boolean mask of the columns the block covers over the given frames."""
    mask = np.zeros((size, size), dtype=bool)
    row = size // 2 - block // 2
    cols = np.arange(size)
    for i in frames:
        x = (i * speed) % size
        lo = int(math.floor(x)) - pad
        hi = int(math.ceil(x + block)) + pad
        covered = ((cols - lo) % size) <= (hi - lo)
        mask[max(row - pad, 0):row + block + pad, covered] = True
    return mask
