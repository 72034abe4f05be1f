"""Blob-detecting provider used as the synthetic-scene test oracle.

Runs as a real provider process speaking the wire protocol on
stdin/stdout, so the subprocess path is exercised end to end. Detection
is plain thresholding plus connected components: bright blobs on the
fragment become boxes scored by their mean intensity. For the "pose"
kind each blob is reported as three keypoints (top, centroid, bottom).

Usage: python -m omnicount.oracle_provider [--threshold N] [--min-area N]
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy import ndimage

from .frames import read_image, to_gray


def detect_blobs(pixels: np.ndarray, threshold: int, min_area: int) -> list[dict]:
    gray = to_gray(pixels)
    mask = gray > threshold
    labels, n = ndimage.label(mask)
    blobs = []
    for region in ndimage.find_objects(labels):
        if region is None:
            continue
        ys, xs = region
        area = int(mask[region].sum())
        if area < min_area:
            continue
        mean_val = float(gray[region][mask[region]].mean())
        blobs.append(
            {
                "x": float(xs.start),
                "y": float(ys.start),
                "w": float(xs.stop - xs.start),
                "h": float(ys.stop - ys.start),
                "score": min(mean_val / 255.0, 1.0),
            }
        )
    return blobs


def _reply_boxes(blobs: list[dict]) -> dict:
    return {
        "v": 1,
        "boxes": [[b["x"], b["y"], b["w"], b["h"], b["score"]] for b in blobs],
    }


def _reply_poses(blobs: list[dict]) -> dict:
    poses = []
    for b in blobs:
        cx = b["x"] + b["w"] / 2.0
        poses.append(
            [
                [cx, b["y"], b["score"]],
                [cx, b["y"] + b["h"] / 2.0, b["score"]],
                [cx, b["y"] + b["h"], b["score"]],
            ]
        )
    return {"v": 1, "poses": poses}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--threshold", type=int, default=128)
    parser.add_argument("--min-area", type=int, default=12)
    args = parser.parse_args(argv)

    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        if request.get("v") != 1:
            return 1
        pixels = read_image(request["image"])
        blobs = detect_blobs(pixels, args.threshold, args.min_area)
        if request.get("kind") == "pose":
            reply = _reply_poses(blobs)
        else:
            reply = _reply_boxes(blobs)
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
