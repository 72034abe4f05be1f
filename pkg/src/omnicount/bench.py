"""Desk-scale throughput proxies for the hot pipeline stages."""

from __future__ import annotations

import time

import numpy as np

from .frames import OmniFrame
from .geometry import OmniCameraModel, UnwarpConfig, build_fragment_maps, unwarp_frame
from .temporal import DEFAULT_KERNELS, FrameRing, ScalePlan, apply_scale_plan, interlace

REPORT_SCHEMA = 1


def bench_unwarp(
    image_size: int = 1024,
    fragments: int = 3,
    fragment_size: int = 448,
    reps: int = 15,
    seed: int = 0,
) -> dict:
    """ms/frame for unwarping one frame into all fragments, maps prebuilt."""
    camera = OmniCameraModel(
        center_x=image_size / 2,
        center_y=image_size / 2,
        radius_inner=image_size * 0.06,
        radius_outer=image_size / 2,
        image_width=image_size,
        image_height=image_size,
    )
    cfg = UnwarpConfig(
        fragments=fragments,
        overlap=0.1,
        fragment_width=fragment_size,
        fragment_height=fragment_size,
    )
    maps = build_fragment_maps(camera, cfg)
    rng = np.random.default_rng(seed)
    frame = OmniFrame(rng.integers(0, 256, (image_size, image_size), dtype=np.uint8))
    for fmap in maps:
        unwarp_frame(frame, fmap)  # build samplers + warm caches
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for fmap in maps:
            unwarp_frame(frame, fmap)
        times.append(time.perf_counter() - t0)
    return {
        "image_size": image_size,
        "fragments": fragments,
        "fragment_size": fragment_size,
        "ms_per_frame": float(np.median(times) * 1000.0),
    }


def bench_interlace(scale_res: int = 32, reps: int = 3000, seed: int = 0) -> dict:
    """Sustained interlace throughput in frames per second."""
    rng = np.random.default_rng(seed)
    kernel = DEFAULT_KERNELS["quad"]
    ring = FrameRing(capacity=kernel.max_age + 1)
    for i in range(kernel.max_age + 1):
        ring.push(OmniFrame(rng.integers(0, 256, (scale_res, scale_res), dtype=np.uint8), index=i))
    interlace(ring, kernel)  # warm
    t0 = time.perf_counter()
    for _ in range(reps):
        interlace(ring, kernel)
    elapsed = time.perf_counter() - t0
    return {
        "scale_res": scale_res,
        "kernel": kernel.name,
        "frames_per_second": float(reps / elapsed),
    }


def bench_scale_plans(plans: dict[str, ScalePlan], reps: int = 200, seed: int = 0) -> dict:
    """ms/frame of apply_scale_plan for every configured plan."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, plan in plans.items():
        warmup = plan.kernel.max_age if plan.kernel is not None else 0
        ring = FrameRing(capacity=warmup + 1)
        for i in range(warmup + 1):
            ring.push(
                OmniFrame(
                    rng.integers(0, 256, (plan.scale_res, plan.scale_res), dtype=np.uint8),
                    index=i,
                )
            )
        apply_scale_plan(ring, plan)
        t0 = time.perf_counter()
        for _ in range(reps):
            apply_scale_plan(ring, plan)
        results[name] = {
            "net_res": plan.net_res,
            "scale_res": plan.scale_res,
            "mode": plan.mode,
            "ms_per_frame": float((time.perf_counter() - t0) / reps * 1000.0),
        }
    return results


def run_benchmarks(plans: dict[str, ScalePlan] | None = None, quick: bool = False) -> dict:
    reps = 5 if quick else 15
    report = {
        "schema": REPORT_SCHEMA,
        "unwarp": bench_unwarp(reps=reps),
        "interlace": bench_interlace(reps=500 if quick else 3000),
    }
    if plans:
        report["plans"] = bench_scale_plans(plans, reps=50 if quick else 200)
    return report
