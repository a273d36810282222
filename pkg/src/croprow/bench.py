"""Throughput harness: in-memory frames through the full pipeline.

Frames are materialized inside each worker before the clock starts, so disk
I/O and inter-process transfer of pixel data stay out of the measurement.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PipelineConfig
from .dataset import load_manifest
from .geometry import ImageDims
from .pipeline import STAGES, process_frame
from .segmentation import load_rgb
from .synthfield import render, synth_specs

MIN_FRAMES = 10


@dataclass(frozen=True)
class FrameSource:
    """Either ``synth`` frames of ``size`` from ``seed`` or the images of a manifest."""

    kind: str = "synth"
    size: int = 512
    seed: int = 0
    count: int = 8
    noise: float = 0.1
    manifest: str | None = None

    def load(self) -> list[np.ndarray]:
        if self.kind == "manifest":
            return [load_rgb(e.image) for e in load_manifest(self.manifest)]
        dims = ImageDims(self.size, self.size)
        return [render(s).image for s in synth_specs(self.count, dims, self.seed, noise=self.noise)]


@dataclass(frozen=True)
class BenchReport:
    frames: int
    jobs: int
    wall: float
    stage_ms: dict[str, tuple[float, float]]   # stage -> (mean, p95)
    failures: int

    @property
    def fps(self) -> float:
        return self.frames / self.wall

    def format(self) -> str:
        out = ["# stage ms_mean ms_p95"]
        for stage, (mean, p95) in self.stage_ms.items():
            out.append(f"{stage} {mean:.2f} {p95:.2f}")
        out.append(f"# frames={self.frames} jobs={self.jobs} failures={self.failures}")
        out.append(f"fps {self.fps:.2f}")
        return "\n".join(out) + "\n"


_FRAMES: list[np.ndarray] = []
_CFG: PipelineConfig | None = None


def _init_worker(source: FrameSource, cfg: PipelineConfig) -> None:
    global _FRAMES, _CFG
    _FRAMES = source.load()
    _CFG = cfg


def _ready(_: int) -> bool:
    time.sleep(0.05)
    return bool(_FRAMES)


def _run_one(n: int) -> dict[str, float] | None:
    try:
        return process_frame(_CFG, image=_FRAMES[n % len(_FRAMES)]).timings
    except Exception as exc:
        # failed frames still cost time; keep whatever stages completed
        frame = getattr(exc, "frame", None)
        return None if frame is None else {**frame.timings, "failed": 1.0}


def run_bench(source: FrameSource, cfg: PipelineConfig, frames: int, jobs: int = 1) -> BenchReport:
    if frames < MIN_FRAMES:
        raise ValueError(f"bench needs at least {MIN_FRAMES} frames, got {frames}")
    jobs = max(1, jobs)
    if jobs == 1:
        _init_worker(source, cfg)
        _run_one(0)  # warm-up
        start = time.perf_counter()
        timings = [_run_one(n) for n in range(frames)]
        wall = time.perf_counter() - start
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(source, cfg)) as pool:
            list(pool.map(_ready, range(4 * jobs)))
            start = time.perf_counter()
            timings = list(pool.map(_run_one, range(frames), chunksize=max(1, frames // (8 * jobs))))
            wall = time.perf_counter() - start
    return summarize(timings, frames, jobs, wall)


def summarize(timings: Sequence[dict[str, float] | None], frames: int, jobs: int, wall: float) -> BenchReport:
    stage_ms = {}
    for stage in (*STAGES, "total"):
        vals = np.array([t[stage] for t in timings if t and stage in t], dtype=float) * 1e3
        if vals.size:
            stage_ms[stage] = (float(vals.mean()), float(np.percentile(vals, 95)))
    failures = sum(1 for t in timings if not t or "failed" in t)
    return BenchReport(frames, jobs, wall, stage_ms, failures)


def write_report(report: BenchReport, path) -> None:
    Path(path).write_text(report.format())
