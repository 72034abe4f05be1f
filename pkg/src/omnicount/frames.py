"""Frame container and raster file I/O (binary PGM/PPM, PNG)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import PipelineError


@dataclass(frozen=True)
class OmniFrame:
    """Single raster flowing through the pipeline.

    ``pixels`` is (H, W) grayscale or (H, W, 3) RGB, uint8 for captured
    frames and float for intermediate resampled data.
    """

    pixels: np.ndarray
    index: int = 0
    timestamp: float = 0.0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    def with_pixels(self, pixels: np.ndarray) -> "OmniFrame":
        return replace(self, pixels=pixels)


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Collapse RGB to single-channel luma; grayscale passes through."""
    if pixels.ndim == 2:
        return pixels
    luma = pixels[..., 0] * 0.299 + pixels[..., 1] * 0.587 + pixels[..., 2] * 0.114
    if pixels.dtype == np.uint8:
        return np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    return luma.astype(pixels.dtype)


def crop_square(pixels: np.ndarray) -> np.ndarray:
    """Center-crop to the largest square."""
    h, w = pixels.shape[:2]
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    return pixels[y0:y0 + side, x0:x0 + side]


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Round float pixel data to uint8 for file output."""
    if pixels.dtype == np.uint8:
        return pixels
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def write_pnm(path: str | Path, pixels: np.ndarray) -> None:
    """Write a binary portable pixmap: P5 for grayscale, P6 for RGB."""
    data = quantize(pixels)
    if data.ndim == 2:
        magic = b"P5"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"P6"
    else:
        raise PipelineError(f"unsupported raster shape {data.shape}")
    h, w = data.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary P5/P6 portable pixmap with maxval <= 255."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise PipelineError(f"{path}: not a binary PGM/PPM file")
    # Header fields may be separated by arbitrary whitespace and comments.
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval > 255:
        raise PipelineError(f"{path}: 16-bit pixmaps not supported")
    channels = 3 if magic == b"P6" else 1
    count = width * height * channels
    data = np.frombuffer(raw, dtype=np.uint8, count=count, offset=pos)
    if data.size != count:
        raise PipelineError(f"{path}: truncated pixel data")
    if channels == 1:
        return data.reshape(height, width).copy()
    return data.reshape(height, width, 3).copy()


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB")
            return np.asarray(img)
    raise PipelineError(f"{path}: unsupported frame format")


def write_image(path: str | Path, pixels: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        write_pnm(path, pixels)
        return
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(quantize(pixels)).save(path)
        return
    raise PipelineError(f"{path}: unsupported frame format")
