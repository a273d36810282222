"""Per-frame pipeline: segmentation (or mask ingestion) -> overlay ->
boundary lines -> centerline, with per-stage wall-clock timings."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

from .config import PipelineConfig
from .errors import DetectionFailure
from .geometry import Centerline, centerline
from .linedetect import DetectedLine, boundary_map, detect_lines, hough, order_left_right
from .segmentation import AGRONAV8, ClassMask, builtin_remap, overlay, remap, segment_exg

STAGES = ("segment", "overlay", "boundary", "hough", "peaks", "centerline")

T = TypeVar("T")
R = TypeVar("R")


@dataclass(eq=False)
class FrameResult:
    mask: ClassMask
    overlay: np.ndarray
    left: DetectedLine | None = None
    right: DetectedLine | None = None
    centerline: Centerline | None = None
    threshold: int | None = None
    degenerate: bool = False
    timings: dict[str, float] = field(default_factory=dict)


def to_field_taxonomy(mask: ClassMask) -> ClassMask:
    return mask if mask.taxonomy == AGRONAV8 else remap(mask, builtin_remap(mask.taxonomy))


def process_frame(cfg: PipelineConfig, image: np.ndarray | None = None,
                  mask: ClassMask | None = None) -> FrameResult:
    """Run every stage; raises ``DetectionFailure`` or ``InsufficientOverlapError``
    with the partial ``FrameResult`` attached as ``.frame``."""
    if image is None and mask is None:
        raise ValueError("need an image or a mask")
    clock = time.perf_counter
    t = {}
    t0 = clock()
    threshold, degenerate = None, False
    if mask is None:
        seg = segment_exg(image, cfg.seg_threshold)
        mask, threshold, degenerate = seg.mask, seg.threshold, seg.degenerate
    else:
        mask = to_field_taxonomy(mask)
    t1 = clock()
    t["segment"] = t1 - t0
    blended = overlay(image if image is not None else mask.colorize(), mask)
    t2 = clock()
    t["overlay"] = t2 - t1
    bmap = boundary_map(mask, cfg.include_other)
    t3 = clock()
    t["boundary"] = t3 - t2
    acc = hough(bmap, cfg.theta_bins, cfg.r_step)
    t4 = clock()
    t["hough"] = t4 - t3
    peaks = detect_lines(acc, 2, cfg.nms_r, cfg.nms_theta, cfg.refine, support=bmap)
    t5 = clock()
    t["peaks"] = t5 - t4
    frame = FrameResult(mask, blended, threshold=threshold, degenerate=degenerate, timings=t)
    try:
        if len(peaks.lines) < 2:
            raise DetectionFailure(peaks.lines)
        frame.left, frame.right = order_left_right(peaks.lines[0], peaks.lines[1], mask.dims)
        frame.centerline = centerline(frame.left.line, frame.right.line, mask.dims, cfg.fraction)
    except Exception as exc:
        t["total"] = clock() - t0
        exc.frame = frame
        raise
    t["centerline"] = clock() - t5
    t["total"] = clock() - t0
    return frame


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    """Ordered map, over a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
