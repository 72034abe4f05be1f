"""Scene configuration files and dataset ingestion.

One YAML file describes one deployable sensor: camera circle, fragment
layout, detection providers, scale plans, kernels, and filter settings.
Datasets are directories of PGM/PPM/PNG frames consumed in sorted order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import yaml

from .errors import ConfigError, DimensionMismatchError
from .frames import OmniFrame, read_image
from .geometry import OmniCameraModel, UnwarpConfig
from .providers import ProviderSpec
from .temporal import DEFAULT_KERNELS, InterlacingKernel, ScalePlan

FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")


@dataclass(frozen=True)
class SceneConfig:
    """Everything one sensor needs, loaded from a single file."""

    camera: OmniCameraModel
    unwarp: UnwarpConfig
    providers: tuple[ProviderSpec, ...] = ()
    nms_threshold: float = 0.4
    fps: float = 15.0
    count_window: int = 15
    count_tolerance: int = 0
    workers: int = 1
    count_cadence: int = 1
    pose_min_conf: float = 0.1
    pose_expand: float = 0.1
    kernels: dict[str, InterlacingKernel] = field(default_factory=dict)
    scale_plans: dict[str, ScalePlan] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.count_cadence < 1:
            raise ConfigError("count_cadence must be >= 1")
        for plan in self.scale_plans.values():
            if plan.mode == "interlaced" and plan.kernel.name not in self.kernels:
                raise ConfigError(f"plan references unknown kernel {plan.kernel.name!r}")

    def unwarp_for(self, provider: ProviderSpec) -> UnwarpConfig:
        """Base fragment layout with the provider's own fragment count."""
        return replace(self.unwarp, fragments=provider.fragments)


def _parse_kernel(entry: dict) -> InterlacingKernel:
    try:
        cells = tuple(tuple(int(c) for c in row) for row in entry["cells"])
        return InterlacingKernel(entry["name"], cells, int(entry.get("t", 1)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad kernel entry {entry!r}: {exc}")


def load_kernel_file(path: str | Path) -> dict[str, InterlacingKernel]:
    """Kernel definition file: a YAML list of {name, cells, t} entries."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = yaml.safe_load(fh) or []
    if not isinstance(entries, list):
        raise ConfigError(f"{path}: kernel file must be a list of kernels")
    kernels = {}
    for entry in entries:
        kernel = _parse_kernel(entry)
        kernels[kernel.name] = kernel
    return kernels


def _parse_plan(entry: dict, kernels: dict[str, InterlacingKernel]) -> tuple[str, ScalePlan]:
    try:
        name = entry["name"]
        mode = entry.get("mode", "linear")
        kernel = None
        if mode == "interlaced":
            kernel_name = entry.get("kernel", "quad")
            if kernel_name not in kernels:
                raise ConfigError(f"plan {name!r}: unknown kernel {kernel_name!r}")
            kernel = kernels[kernel_name].with_t(int(entry.get("t", kernels[kernel_name].t)))
        plan = ScalePlan(
            net_res=int(entry["net_res"]),
            scale_res=int(entry["scale_res"]),
            mode=mode,
            kernel=kernel,
        )
        return name, plan
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scale plan entry {entry!r}: {exc}")


def scene_config_from_dict(data: dict) -> SceneConfig:
    try:
        camera = OmniCameraModel(**data["camera"])
        unwarp = UnwarpConfig(**data.get("unwarp", {"fragments": 3}))
        providers = tuple(ProviderSpec(**p) for p in data.get("providers", []))
    except TypeError as exc:
        raise ConfigError(f"bad scene config: {exc}")
    except KeyError as exc:
        raise ConfigError(f"scene config missing section {exc}")

    kernels = dict(DEFAULT_KERNELS)
    for entry in data.get("kernels", []):
        kernel = _parse_kernel(entry)
        kernels[kernel.name] = kernel
    if "kernel_file" in data:
        kernels.update(load_kernel_file(data["kernel_file"]))

    plans = {}
    for entry in data.get("scale_plans", []):
        name, plan = _parse_plan(entry, kernels)
        plans[name] = plan

    count_filter = data.get("count_filter", {})
    return SceneConfig(
        camera=camera,
        unwarp=unwarp,
        providers=providers,
        nms_threshold=float(data.get("nms_threshold", 0.4)),
        fps=float(data.get("fps", 15.0)),
        count_window=int(count_filter.get("window", 15)),
        count_tolerance=int(count_filter.get("tolerance", 0)),
        workers=int(data.get("workers", 1)),
        count_cadence=int(data.get("count_cadence", 1)),
        pose_min_conf=float(data.get("pose_min_conf", 0.1)),
        pose_expand=float(data.get("pose_expand", 0.1)),
        kernels=kernels,
        scale_plans=plans,
    )


def load_scene_config(path: str | Path) -> SceneConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return scene_config_from_dict(data)


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered frame files plus optional ground truth."""

    root: Path
    frame_paths: tuple[Path, ...]
    gt_path: Path | None = None
    split: str = ""


def scan_dataset(
    root: str | Path, gt_path: str | Path | None = None, split: str = ""
) -> DatasetManifest:
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset directory {root} does not exist")
    frames = tuple(
        sorted(p for p in root.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
    )
    if gt_path is None:
        candidate = root / "ground_truth.jsonl"
        gt_path = candidate if candidate.exists() else None
    else:
        gt_path = Path(gt_path)
    return DatasetManifest(root=root, frame_paths=frames, gt_path=gt_path, split=split)


def iter_frames(manifest: DatasetManifest, fps: float = 15.0) -> Iterator[OmniFrame]:
    """Yield frames in manifest order, checking dimension consistency."""
    shape = None
    for index, path in enumerate(manifest.frame_paths):
        try:
            pixels = read_image(path)
        except FileNotFoundError:
            raise OSError(f"frame file missing: {path}")
        if shape is None:
            shape = pixels.shape[:2]
        elif pixels.shape[:2] != shape:
            raise DimensionMismatchError(
                f"{path}: frame is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"dataset started at {shape[1]}x{shape[0]}"
            )
        yield OmniFrame(pixels, index=index, timestamp=index / fps)
