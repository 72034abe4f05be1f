"""Client side of the detection-provider wire protocol (v1).

A provider is an external process. For each fragment the pipeline writes
the raster to a temp file as a binary portable pixmap, then sends one JSON
request line on the provider's stdin::

    {"v": 1, "frame": <int>, "fragment": <int>, "image": "<path>", "kind": "boxes"|"pose"}

The provider answers with exactly one JSON line, in order::

    {"v": 1, "boxes": [[x, y, w, h, score], ...]}        for kind "boxes"
    {"v": 1, "poses": [[[x, y, c], ...], ...]}           for kind "pose"

Coordinates are fragment pixels. Timeouts and malformed replies raise
typed errors so callers can skip the frame without losing track of it.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import PoseDetection
from .boxes import DetectionBox
from .errors import ConfigError, ProtocolError, ProviderTimeoutError
from .frames import write_pnm

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class ProviderSpec:
    """How to run one external detector and what it answers with."""

    name: str
    kind: str  # "boxes" | "pose"
    command: str
    fragments: int = 3
    timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.kind not in ("boxes", "pose"):
            raise ConfigError(f"provider {self.name}: unknown kind {self.kind!r}")
        if self.fragments < 1:
            raise ConfigError(f"provider {self.name}: fragments must be >= 1")
        if not self.command.strip():
            raise ConfigError(f"provider {self.name}: empty command")


class ProviderClient:
    """One long-lived provider process, strictly one request in flight."""

    def __init__(self, spec: ProviderSpec, workdir: str | Path | None = None):
        self.spec = spec
        self._owns_workdir = workdir is None
        self._workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="omniprov_"))
        self._proc = subprocess.Popen(
            shlex.split(spec.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        self._buffer = b""
        self._serial = 0

    def __enter__(self) -> "ProviderClient":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=2.0)
            except Exception:
                self._proc.kill()
                self._proc.wait()
        if self._owns_workdir:
            for leftover in self._workdir.glob("*"):
                leftover.unlink(missing_ok=True)
            try:
                self._workdir.rmdir()
            except OSError:
                pass

    def detect(
        self, frame_index: int, fragment_index: int, pixels: np.ndarray
    ) -> list[DetectionBox] | list[PoseDetection]:
        """Send one fragment, wait for one reply, parse it."""
        self._serial += 1
        image_path = self._workdir / f"{self.spec.name}_{self._serial}.ppm"
        write_pnm(image_path, pixels)
        request = {
            "v": PROTOCOL_VERSION,
            "frame": frame_index,
            "fragment": fragment_index,
            "image": str(image_path),
            "kind": self.spec.kind,
        }
        try:
            reply_line = self._roundtrip(json.dumps(request))
        finally:
            image_path.unlink(missing_ok=True)
        return self._parse_reply(reply_line, fragment_index, frame_index)

    def _roundtrip(self, request_line: str) -> str:
        if self._proc.poll() is not None:
            raise ProtocolError(
                f"provider {self.spec.name} exited with code {self._proc.returncode}"
            )
        try:
            self._proc.stdin.write(request_line.encode("utf-8") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"provider {self.spec.name} closed its stdin: {exc}")
        return self._read_line(deadline=time.monotonic() + self.spec.timeout)

    def _read_line(self, deadline: float) -> str:
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProviderTimeoutError(
                    f"provider {self.spec.name} silent for {self.spec.timeout}s"
                )
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise ProviderTimeoutError(
                    f"provider {self.spec.name} silent for {self.spec.timeout}s"
                )
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProtocolError(f"provider {self.spec.name} closed its stdout")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8")

    def _parse_reply(
        self, line: str, fragment_index: int, frame_index: int
    ) -> list[DetectionBox] | list[PoseDetection]:
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"provider {self.spec.name}: invalid JSON reply: {exc}")
        if not isinstance(reply, dict) or reply.get("v") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"provider {self.spec.name}: bad reply version {reply!r:.80}"
            )
        if self.spec.kind == "boxes":
            return self._parse_boxes(reply, fragment_index, frame_index)
        return self._parse_poses(reply, fragment_index)

    def _parse_boxes(
        self, reply: dict, fragment_index: int, frame_index: int
    ) -> list[DetectionBox]:
        rows = reply.get("boxes")
        if not isinstance(rows, list):
            raise ProtocolError(f"provider {self.spec.name}: missing 'boxes' array")
        boxes = []
        for row in rows:
            try:
                x, y, w, h, score = (float(v) for v in row)
            except (TypeError, ValueError):
                raise ProtocolError(
                    f"provider {self.spec.name}: malformed box row {row!r}"
                )
            if w <= 0 or h <= 0 or not 0.0 <= score <= 1.0:
                raise ProtocolError(
                    f"provider {self.spec.name}: box row out of range {row!r}"
                )
            boxes.append(
                DetectionBox(
                    x, y, w, h,
                    score=score,
                    source=self.spec.name,
                    frame_index=frame_index,
                    fragment_index=fragment_index,
                )
            )
        return boxes

    def _parse_poses(self, reply: dict, fragment_index: int) -> list[PoseDetection]:
        rows = reply.get("poses")
        if not isinstance(rows, list):
            raise ProtocolError(f"provider {self.spec.name}: missing 'poses' array")
        poses = []
        for row in rows:
            try:
                keypoints = tuple((float(x), float(y), float(c)) for x, y, c in row)
            except (TypeError, ValueError):
                raise ProtocolError(
                    f"provider {self.spec.name}: malformed pose row {row!r}"
                )
            poses.append(PoseDetection(keypoints=keypoints, fragment_index=fragment_index))
        return poses


class ProviderPool:
    """Fixed set of provider processes serving fragments concurrently.

    Each underlying process still handles one request at a time; with
    ``workers`` == 1 everything is strictly sequential.
    """

    def __init__(self, spec: ProviderSpec, workers: int = 1):
        if workers < 1:
            raise ConfigError(f"worker count must be >= 1, got {workers}")
        self.spec = spec
        self._clients = [ProviderClient(spec) for _ in range(workers)]
        self._executor = (
            ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        )

    def __enter__(self) -> "ProviderPool":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
        for client in self._clients:
            client.close()

    def detect_fragments(
        self, frame_index: int, rasters: list[np.ndarray]
    ) -> list[list]:
        """Run the provider over every fragment raster of one frame.

        Results come back ordered by fragment index regardless of worker
        scheduling; errors propagate to the caller.
        """
        if self._executor is None:
            return [
                self._clients[0].detect(frame_index, i, raster)
                for i, raster in enumerate(rasters)
            ]
        # Each client owns a slice of the fragments and works through it
        # sequentially: a client never has two requests in flight.
        slices: list[list[tuple[int, np.ndarray]]] = [[] for _ in self._clients]
        for i, raster in enumerate(rasters):
            slices[i % len(self._clients)].append((i, raster))

        def work(client: ProviderClient, jobs: list[tuple[int, np.ndarray]]):
            return [(i, client.detect(frame_index, i, raster)) for i, raster in jobs]

        futures = [
            self._executor.submit(work, client, jobs)
            for client, jobs in zip(self._clients, slices)
            if jobs
        ]
        indexed = [pair for future in futures for pair in future.result()]
        indexed.sort(key=lambda pair: pair[0])
        return [result for _, result in indexed]


@dataclass(frozen=True)
class FragmentDetections:
    """Everything one provider reported for one frame, tagged by fragment."""

    provider: str
    kind: str
    boxes: tuple[DetectionBox, ...] = ()
    poses: tuple[PoseDetection, ...] = ()


def harvest_fragments(frame, pool: ProviderPool, maps) -> FragmentDetections:
    """Unwarp every fragment of one frame and run the provider on each.

    Timeouts and protocol errors propagate so the caller can record the
    frame as skipped instead of silently dropping it.
    """
    from .geometry import unwarp_frame

    rasters = [unwarp_frame(frame, fmap).pixels for fmap in maps]
    results = pool.detect_fragments(frame.index, rasters)
    boxes: list[DetectionBox] = []
    poses: list[PoseDetection] = []
    for per_fragment in results:
        for det in per_fragment:
            if isinstance(det, DetectionBox):
                boxes.append(det)
            else:
                poses.append(det)
    return FragmentDetections(
        provider=pool.spec.name,
        kind=pool.spec.kind,
        boxes=tuple(boxes),
        poses=tuple(poses),
    )
