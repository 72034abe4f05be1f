"""Camera model and fragment maps for a ceiling-mounted omnidirectional lens.

The circular fisheye image is resampled into ``fragments`` overlapping
perspective-like rectangles using an equidistant polar projection: output
columns sweep the fragment's angular span linearly, output rows sweep the
retained radial band linearly, and pixels are sampled bilinearly. Column 0
maps to the fragment's start angle; the bottom row maps to the outer edge
of the radial band. The projection is analytically invertible, so points
can be warped between fragment and omni coordinates at subpixel precision.

Pixel convention: pixel centers sit at integer coordinates and bilinear
sampling clamps at the image edge.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError, FragmentBoundsError, SchemaMismatchError
from .frames import OmniFrame

TWO_PI = 2.0 * math.pi

MAP_MAGIC = b"OMAP"
MAP_VERSION = 1
# LUT entries are stored as little-endian 32-bit fixed point, 8 fractional bits.
_FIXED_SCALE = 256.0
_HEADER = struct.Struct("<4sHHIIII")
_GEOMETRY = struct.Struct("<6d")


@dataclass(frozen=True)
class OmniCameraModel:
    """Circle geometry of the fisheye image.

    ``radius_inner`` bounds the exclusion disc around the heavily distorted
    centre; ``radius_outer`` is the usable image circle.
    """

    center_x: float
    center_y: float
    radius_inner: float
    radius_outer: float
    image_width: int
    image_height: int

    def __post_init__(self) -> None:
        if not 0 <= self.radius_inner < self.radius_outer:
            raise ConfigError(
                f"radii must satisfy 0 <= inner < outer, got "
                f"{self.radius_inner}, {self.radius_outer}"
            )
        limit = min(self.image_width, self.image_height) / 2 + 1
        if self.radius_outer > limit:
            raise ConfigError(
                f"radius_outer {self.radius_outer} exceeds image half-extent {limit}"
            )
        if not (0 <= self.center_x < self.image_width and 0 <= self.center_y < self.image_height):
            raise ConfigError("camera center lies outside the image")


@dataclass(frozen=True)
class UnwarpConfig:
    """Fragment layout parameters.

    ``fragments`` sectors tile the full circle; each is widened by
    ``overlap`` (fraction of its angular width) on either side.
    ``band_fraction`` selects how much of the radial band is kept, measured
    from the outer radius inward; smaller values keep only the outer band,
    yielding wide, short fragments. Output dimensions may be fixed or left
    automatic (None), in which case they are derived from the angular span
    at the outer radius and the band height.
    """

    fragments: int
    overlap: float = 0.0
    band_fraction: float = 1.0
    fragment_width: int | None = None
    fragment_height: int | None = None

    def __post_init__(self) -> None:
        if self.fragments < 1:
            raise ConfigError(f"fragment count must be >= 1, got {self.fragments}")
        if not 0.0 <= self.overlap < 0.5:
            raise ConfigError(f"overlap must be in [0, 0.5), got {self.overlap}")
        if not 0.0 <= self.band_fraction <= 1.0:
            raise ConfigError(f"band_fraction must be in [0, 1], got {self.band_fraction}")
        for name in ("fragment_width", "fragment_height"):
            value = getattr(self, name)
            if value is not None and value < 2:
                raise ConfigError(f"{name} must be >= 2, got {value}")

    @property
    def span(self) -> float:
        """Effective angular span of one fragment, radians."""
        return TWO_PI / self.fragments * (1.0 + 2.0 * self.overlap)


@dataclass(frozen=True)
class FragmentMap:
    """Precomputed omni-to-fragment correspondence for one sector.

    ``forward_lut`` has shape (H, W, 2) and holds, per output pixel, the
    subpixel (x, y) source coordinate on the omni image. The analytic
    projection parameters are kept alongside so points can be mapped in
    both directions without the LUT.
    """

    fragment_index: int
    start_angle: float
    end_angle: float
    r_lo: float
    r_hi: float
    center_x: float
    center_y: float
    image_width: int
    image_height: int
    forward_lut: np.ndarray = field(repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.forward_lut.shape[0]

    @property
    def width(self) -> int:
        return self.forward_lut.shape[1]

    @property
    def span(self) -> float:
        return self.end_angle - self.start_angle

    @cached_property
    def _sampler(self) -> tuple[np.ndarray, ...]:
        """Flat gather indices and lerp weights for bilinear sampling."""
        w_src = self.image_width
        h_src = self.image_height
        x = self.forward_lut[..., 0].astype(np.float64)
        y = self.forward_lut[..., 1].astype(np.float64)
        x0 = np.clip(np.floor(x), 0, max(w_src - 2, 0)).astype(np.int64)
        y0 = np.clip(np.floor(y), 0, max(h_src - 2, 0)).astype(np.int64)
        fx = np.clip(x - x0, 0.0, 1.0).astype(np.float32)
        fy = np.clip(y - y0, 0.0, 1.0).astype(np.float32)
        idx00 = y0 * w_src + x0
        idx01 = idx00 + 1
        idx10 = idx00 + w_src
        idx11 = idx10 + 1
        return idx00, idx01, idx10, idx11, fx, fy


def build_fragment_maps(camera: OmniCameraModel, cfg: UnwarpConfig) -> list[FragmentMap]:
    """Build one map per fragment; non-overlap spans tile the full circle."""
    base = TWO_PI / cfg.fragments
    r_hi = float(camera.radius_outer)
    r_lo = r_hi - cfg.band_fraction * (camera.radius_outer - camera.radius_inner)

    width = cfg.fragment_width or max(2, round(cfg.span * r_hi))
    height = cfg.fragment_height or max(2, round(r_hi - r_lo))

    maps = []
    for i in range(cfg.fragments):
        start = i * base - cfg.overlap * base
        end = (i + 1) * base + cfg.overlap * base
        theta = start + (end - start) * np.arange(width, dtype=np.float64) / (width - 1)
        radius = r_lo + (r_hi - r_lo) * np.arange(height, dtype=np.float64) / (height - 1)
        lut = np.empty((height, width, 2), dtype=np.float32)
        lut[..., 0] = camera.center_x + radius[:, None] * np.cos(theta)[None, :]
        lut[..., 1] = camera.center_y + radius[:, None] * np.sin(theta)[None, :]
        maps.append(
            FragmentMap(
                fragment_index=i,
                start_angle=start,
                end_angle=end,
                r_lo=r_lo,
                r_hi=r_hi,
                center_x=camera.center_x,
                center_y=camera.center_y,
                image_width=camera.image_width,
                image_height=camera.image_height,
                forward_lut=lut,
            )
        )
    return maps


def _bilinear_gather(plane: np.ndarray, sampler: tuple[np.ndarray, ...]) -> np.ndarray:
    idx00, idx01, idx10, idx11, fx, fy = sampler
    flat = plane.astype(np.float32, copy=False).ravel()
    f00 = flat.take(idx00)
    f01 = flat.take(idx01)
    f10 = flat.take(idx10)
    f11 = flat.take(idx11)
    # Lerp form keeps constant inputs exactly constant.
    top = f00 + fx * (f01 - f00)
    bot = f10 + fx * (f11 - f10)
    return top + fy * (bot - top)


def unwarp_frame(frame: OmniFrame, fmap: FragmentMap) -> OmniFrame:
    """Resample one fragment out of the omni frame via the map's LUT."""
    if (frame.height, frame.width) != (fmap.image_height, fmap.image_width):
        raise DimensionMismatchError(
            f"frame is {frame.width}x{frame.height}, map expects "
            f"{fmap.image_width}x{fmap.image_height}"
        )
    sampler = fmap._sampler
    src = frame.pixels
    if src.ndim == 2:
        out = _bilinear_gather(src, sampler)
    else:
        out = np.stack(
            [_bilinear_gather(src[..., c], sampler) for c in range(src.shape[2])],
            axis=-1,
        )
    if src.dtype == np.uint8:
        out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return OmniFrame(out, index=frame.index, timestamp=frame.timestamp)


def fragment_to_omni(point: tuple[float, float], fmap: FragmentMap) -> tuple[float, float]:
    """Map a fragment (x, y) point back onto the omni image."""
    u, v = point
    eps = 1e-6
    if not (-eps <= u <= fmap.width - 1 + eps and -eps <= v <= fmap.height - 1 + eps):
        raise FragmentBoundsError(
            f"point {point} outside fragment {fmap.fragment_index} "
            f"({fmap.width}x{fmap.height})"
        )
    theta = fmap.start_angle + fmap.span * u / (fmap.width - 1)
    radius = fmap.r_lo + (fmap.r_hi - fmap.r_lo) * v / (fmap.height - 1)
    return (
        fmap.center_x + radius * math.cos(theta),
        fmap.center_y + radius * math.sin(theta),
    )


def omni_to_fragment(
    point: tuple[float, float], maps: list[FragmentMap]
) -> list[tuple[int, tuple[float, float]]]:
    """Locate an omni point in every fragment covering its angle.

    Returns one (fragment_index, (x, y)) entry per covering fragment;
    points in exclusion areas (inside the centre disc, outside the band)
    yield an empty list.
    """
    hits: list[tuple[int, tuple[float, float]]] = []
    if not maps:
        return hits
    first = maps[0]
    dx = point[0] - first.center_x
    dy = point[1] - first.center_y
    radius = math.hypot(dx, dy)
    if not (first.r_lo <= radius <= first.r_hi):
        return hits
    theta = math.atan2(dy, dx) % TWO_PI
    for fmap in maps:
        delta = (theta - fmap.start_angle) % TWO_PI
        if delta <= fmap.span + 1e-12:
            u = delta / fmap.span * (fmap.width - 1)
            v = (radius - fmap.r_lo) / (fmap.r_hi - fmap.r_lo) * (fmap.height - 1)
            hits.append((fmap.fragment_index, (u, v)))
    return hits


def save_fragment_map(fmap: FragmentMap, path: str | Path) -> None:
    """Write the versioned binary sidecar for one fragment map."""
    fixed = np.rint(fmap.forward_lut.astype(np.float64) * _FIXED_SCALE).astype("<i4")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAP_MAGIC,
                MAP_VERSION,
                fmap.fragment_index,
                fmap.height,
                fmap.width,
                fmap.image_width,
                fmap.image_height,
            )
        )
        fh.write(
            _GEOMETRY.pack(
                fmap.start_angle,
                fmap.end_angle,
                fmap.r_lo,
                fmap.r_hi,
                fmap.center_x,
                fmap.center_y,
            )
        )
        fh.write(fixed.tobytes())


def load_fragment_map(path: str | Path) -> FragmentMap:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAP_MAGIC:
        raise SchemaMismatchError(f"{path}: bad magic bytes")
    magic, version, index, height, width, image_w, image_h = _HEADER.unpack_from(raw, 0)
    if version != MAP_VERSION:
        raise SchemaMismatchError(f"{path}: unsupported map version {version}")
    offset = _HEADER.size
    start, end, r_lo, r_hi, cx, cy = _GEOMETRY.unpack_from(raw, offset)
    offset += _GEOMETRY.size
    count = height * width * 2
    fixed = np.frombuffer(raw, dtype="<i4", count=count, offset=offset)
    lut = (fixed.astype(np.float64) / _FIXED_SCALE).astype(np.float32)
    return FragmentMap(
        fragment_index=index,
        start_angle=start,
        end_angle=end,
        r_lo=r_lo,
        r_hi=r_hi,
        center_x=cx,
        center_y=cy,
        image_width=image_w,
        image_height=image_h,
        forward_lut=lut.reshape(height, width, 2),
    )
