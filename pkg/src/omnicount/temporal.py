"""Extreme-low-resolution degradation and temporal reconstruction.

Frames are box-filtered down to a privacy resolution, buffered in a small
ring, and rebuilt for the detector either by plain bilinear upscaling or
by an interlacing step that doubles resolution by copying pixels from
several past frames. An interlacing kernel is a 2x2 matrix of frame-age
offsets: output pixel (2i+di, 2j+dj) is copied verbatim from pixel (i, j)
of the frame aged ``t * cells[di][dj]`` steps, where ``t`` is the kernel's
time-delta multiplier. With a static scene every cell reads identical
data, so the result collapses to nearest-neighbour 2x upscaling; with
motion the cells disagree and the mismatch edges carry the temporal
signal.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    FrameOrderError,
    HistoryError,
    InvalidResolutionError,
)
from .frames import OmniFrame

MIN_SCALE_RES = 8


@dataclass(frozen=True)
class InterlacingKernel:
    """2x2 matrix of non-negative frame-age offsets with a time-delta."""

    name: str
    cells: tuple[tuple[int, int], tuple[int, int]]
    t: int = 1

    def __post_init__(self) -> None:
        flat = [c for row in self.cells for c in row]
        if len(self.cells) != 2 or any(len(row) != 2 for row in self.cells):
            raise ConfigError(f"kernel {self.name}: cells must be 2x2")
        if any(c < 0 for c in flat):
            raise ConfigError(f"kernel {self.name}: cell offsets must be >= 0")
        if 0 not in flat:
            raise ConfigError(f"kernel {self.name}: at least one cell must be age 0")
        if self.t < 1:
            raise ConfigError(f"kernel {self.name}: time-delta must be >= 1")

    def with_t(self, t: int) -> "InterlacingKernel":
        return replace(self, t=t)

    @property
    def max_age(self) -> int:
        return self.t * max(c for row in self.cells for c in row)


# Shipped kernel set. The four-age "quad" kernel spreads its samples over
# the widest time window of any 2x2 layout; cell values are overridable
# through the kernel file, so deployments can substitute their own.
DEFAULT_KERNELS: dict[str, InterlacingKernel] = {
    "checker": InterlacingKernel("checker", ((0, 1), (1, 0))),
    "quad": InterlacingKernel("quad", ((0, 1), (2, 3))),
    "rows": InterlacingKernel("rows", ((0, 0), (1, 1))),
}


class FrameRing:
    """Bounded history of low-resolution frames, newest last.

    Single writer; frames must arrive with strictly increasing indices and
    matching dimensions.
    """

    def __init__(self, capacity: int, fps: float = 15.0):
        if capacity < 1:
            raise ConfigError(f"ring capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.fps = fps
        self._frames: deque[OmniFrame] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._frames)

    def __iter__(self) -> Iterable[OmniFrame]:
        return iter(self._frames)

    @property
    def latest(self) -> OmniFrame:
        if not self._frames:
            raise HistoryError("ring is empty")
        return self._frames[-1]

    def push(self, frame: OmniFrame) -> None:
        if self._frames:
            last = self._frames[-1]
            if frame.index <= last.index:
                raise FrameOrderError(
                    f"frame {frame.index} pushed after frame {last.index}"
                )
            if frame.pixels.shape != last.pixels.shape:
                raise DimensionMismatchError(
                    f"frame shape {frame.pixels.shape} != ring shape {last.pixels.shape}"
                )
        self._frames.append(frame)

    def frame_at_age(self, age: int) -> OmniFrame:
        """Frame pushed ``age`` steps before the newest one."""
        if age < 0 or age >= len(self._frames):
            raise HistoryError(
                f"ring holds {len(self._frames)} frames, age {age} unavailable"
            )
        return self._frames[len(self._frames) - 1 - age]


@dataclass(frozen=True)
class ScalePlan:
    """Privacy downscale resolution paired with the detector input size."""

    net_res: int
    scale_res: int
    mode: str = "linear"  # "linear" | "interlaced"
    kernel: InterlacingKernel | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("linear", "interlaced"):
            raise ConfigError(f"unknown scale mode {self.mode!r}")
        if self.scale_res > self.net_res:
            raise ConfigError(
                f"scale_res {self.scale_res} exceeds net_res {self.net_res}"
            )
        if self.mode == "interlaced":
            if self.kernel is None:
                raise ConfigError("interlaced mode requires a kernel")
            if self.net_res < 2 * self.scale_res:
                raise ConfigError(
                    f"interlaced mode needs net_res >= {2 * self.scale_res}, "
                    f"got {self.net_res}"
                )


def downscale(frame: OmniFrame, scale_res: int) -> OmniFrame:
    """Area-average (box filter) resampling to scale_res x scale_res."""
    if scale_res < MIN_SCALE_RES:
        raise InvalidResolutionError(f"scale_res must be >= {MIN_SCALE_RES}")
    if frame.height != frame.width:
        raise DimensionMismatchError(
            f"downscale expects a square frame, got {frame.width}x{frame.height}"
        )
    src = frame.pixels.astype(np.float64, copy=False)
    size = frame.height
    if scale_res > size:
        raise InvalidResolutionError(
            f"scale_res {scale_res} exceeds frame size {size}"
        )
    if size % scale_res == 0:
        f = size // scale_res
        if src.ndim == 2:
            out = src.reshape(scale_res, f, scale_res, f).mean(axis=(1, 3))
        else:
            out = src.reshape(scale_res, f, scale_res, f, -1).mean(axis=(1, 3))
    else:
        weights = _area_weights(size, scale_res)
        if src.ndim == 2:
            out = weights @ src @ weights.T
        else:
            out = np.einsum("oi,ijc,pj->opc", weights, src, weights)
    return frame.with_pixels(out)


def _area_weights(src: int, dst: int) -> np.ndarray:
    """Row-normalized interval-overlap matrix for exact box filtering."""
    step = src / dst
    weights = np.zeros((dst, src), dtype=np.float64)
    for o in range(dst):
        lo = o * step
        hi = lo + step
        i0 = int(np.floor(lo))
        i1 = min(int(np.ceil(hi)), src)
        for i in range(i0, i1):
            weights[o, i] = min(hi, i + 1) - max(lo, i)
    return weights / weights.sum(axis=1, keepdims=True)


def upscale_linear(frame: OmniFrame, target_res: int) -> OmniFrame:
    """Bilinear resampling to target_res x target_res.

    Uses the half-pixel mapping with edge clamping; same-size upscaling is
    the identity and constants are preserved exactly (lerp form).
    """
    if target_res < 1:
        raise InvalidResolutionError(f"target_res must be >= 1, got {target_res}")
    src = frame.pixels
    h, w = src.shape[:2]
    if (h, w) == (target_res, target_res):
        return frame
    out = _resample_axis(src.astype(np.float64, copy=False), target_res, axis=0)
    out = _resample_axis(out, target_res, axis=1)
    return frame.with_pixels(out)


def _resample_axis(data: np.ndarray, target: int, axis: int) -> np.ndarray:
    size = data.shape[axis]
    pos = (np.arange(target, dtype=np.float64) + 0.5) * (size / target) - 0.5
    pos = np.clip(pos, 0.0, size - 1)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, max(size - 2, 0))
    frac = pos - i0
    lo = np.take(data, i0, axis=axis)
    hi = np.take(data, np.minimum(i0 + 1, size - 1), axis=axis)
    shape = [1] * data.ndim
    shape[axis] = target
    frac = frac.reshape(shape)
    return lo + frac * (hi - lo)


def interlace(ring: FrameRing, kernel: InterlacingKernel) -> OmniFrame:
    """Double resolution by copying pixels from kernel-addressed frames.

    Every output pixel equals exactly one input pixel; nothing is blended.
    """
    if len(ring) <= kernel.max_age:
        raise HistoryError(
            f"kernel {kernel.name} (t={kernel.t}) needs {kernel.max_age + 1} "
            f"frames, ring holds {len(ring)}"
        )
    current = ring.latest
    h, w = current.pixels.shape[:2]
    out_shape = (2 * h, 2 * w) + current.pixels.shape[2:]
    out = np.empty(out_shape, dtype=current.pixels.dtype)
    for di in range(2):
        for dj in range(2):
            age = kernel.t * kernel.cells[di][dj]
            out[di::2, dj::2] = ring.frame_at_age(age).pixels
    return OmniFrame(out, index=current.index, timestamp=current.timestamp)


def apply_scale_plan(ring: FrameRing, plan: ScalePlan) -> OmniFrame:
    """Reconstruct the newest ring frame at the detector resolution."""
    current = ring.latest
    if current.height != plan.scale_res or current.width != plan.scale_res:
        raise DimensionMismatchError(
            f"ring frames are {current.width}x{current.height}, plan expects "
            f"{plan.scale_res}x{plan.scale_res}"
        )
    if plan.mode == "linear":
        return upscale_linear(current, plan.net_res)
    doubled = interlace(ring, plan.kernel)
    return upscale_linear(doubled, plan.net_res)
