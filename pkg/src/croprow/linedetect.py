"""Soil/vegetation boundary lines via a weighted Hough accumulator.

The accumulator is indexed ``votes[r_bin, theta_bin]``. Because ``(r, theta)``
and ``(-r, theta - pi)`` describe the same line, the theta axis wraps onto
itself with the r axis mirrored; the r axis is laid out symmetrically about
zero so that mirroring maps bin ``i`` to ``r_bins - 1 - i`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DetectionFailure, FormatError
from .geometry import ImageDims, SemanticLine, parse_header, x_at_row_unclipped
from .segmentation import ClassMask


@dataclass(eq=False)
class BoundaryMap:
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("boundary weights must be 2-D")
        if not np.all(np.isfinite(w)) or (w.size and w.min() < 0):
            raise ValueError("boundary weights must be finite and non-negative")
        self.weights = w

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.weights.shape[1], self.weights.shape[0])


@dataclass(eq=False)
class HoughAccumulator:
    votes: np.ndarray
    r_step: float
    theta_step: float
    dims: ImageDims

    @property
    def r_bins(self) -> int:
        return self.votes.shape[0]

    @property
    def theta_bins(self) -> int:
        return self.votes.shape[1]

    @property
    def diagonal(self) -> float:
        return self.dims.diagonal

    @property
    def r_max(self) -> float:
        """Half-span of the r axis (>= half the diagonal)."""
        return self.r_bins * self.r_step / 2.0

    def r_center(self, i):
        return (np.asarray(i) + 0.5) * self.r_step - self.r_max

    def theta_center(self, j):
        return (np.asarray(j) + 0.5) * self.theta_step

    def dump(self) -> str:
        head = f"{self.r_bins} {self.theta_bins} {self.r_step!r} {self.theta_step!r} {self.diagonal!r}"
        rows = (" ".join(f"{v:.9g}" for v in row) for row in self.votes)
        return head + "\n" + "\n".join(rows) + "\n"


@dataclass(frozen=True)
class DetectedLine:
    line: SemanticLine
    score: float


class Peaks(NamedTuple):
    lines: list[DetectedLine]
    bins: list[tuple[int, int]]
    short: bool


def boundary_map(mask: ClassMask, include_other: bool = False) -> BoundaryMap:
    """Unit weight wherever a pixel's 4-neighborhood (itself included) holds soil
    and vegetation; with ``include_other``, soil next to any non-vegetation class
    counts as well."""
    tax = mask.taxonomy
    soil = mask.data == tax.id("soil")
    if include_other:
        other = ~soil
    else:
        other = mask.data == tax.id("vegetation") if "vegetation" in tax.labels else np.zeros_like(soil)
    return BoundaryMap(_touches(soil, other).astype(np.float64))


def _neighborhood_any(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    out[1:, :] |= a[:-1, :]
    out[:-1, :] |= a[1:, :]
    out[:, 1:] |= a[:, :-1]
    out[:, :-1] |= a[:, 1:]
    return out


def _touches(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _neighborhood_any(a) & _neighborhood_any(b)


def theta_table(theta_bins: int) -> np.ndarray:
    return (np.arange(theta_bins) + 0.5) * (math.pi / theta_bins)


def r_layout(dims: ImageDims, r_step: float) -> tuple[int, float]:
    r_bins = int(math.ceil(dims.diagonal / r_step))
    return r_bins, r_bins * r_step / 2.0


def hough(bmap: BoundaryMap, theta_bins: int = 180, r_step: float = 1.0) -> HoughAccumulator:
    if theta_bins < 1 or not r_step > 0:
        raise ValueError("theta_bins must be >= 1 and r_step > 0")
    dims = bmap.dims
    r_bins, r_max = r_layout(dims, r_step)
    thetas = theta_table(theta_bins)
    ys, xs = np.nonzero(bmap.weights)
    w = bmap.weights[ys, xs]
    cx, cy = dims.center
    r = np.outer(xs - cx, np.sin(thetas)) + np.outer(ys - cy, np.cos(thetas))
    ri = np.floor((r + r_max) / r_step).astype(np.int64)
    np.clip(ri, 0, r_bins - 1, out=ri)
    flat = ri * theta_bins + np.arange(theta_bins)
    votes = np.bincount(flat.ravel(), weights=np.repeat(w, theta_bins),
                        minlength=r_bins * theta_bins).reshape(r_bins, theta_bins)
    return HoughAccumulator(votes, float(r_step), math.pi / theta_bins, dims)


def _wrapped(acc: HoughAccumulator, i: int, j: int) -> tuple[int, int] | None:
    """Map a possibly out-of-range theta index onto the stored grid."""
    nt, nr = acc.theta_bins, acc.r_bins
    if not 0 <= i < nr:
        return None
    q, jj = divmod(j, nt)
    if q % 2:
        i = nr - 1 - i
    return i, jj


def _suppress(votes: np.ndarray, acc: HoughAccumulator, i: int, j: int, nms_r: int, nms_theta: int) -> None:
    for dj in range(-nms_theta, nms_theta + 1):
        for di in range(-nms_r, nms_r + 1):
            cell = _wrapped(acc, i + di, j + dj)
            if cell is not None:
                votes[cell] = 0.0


def _refine(acc: HoughAccumulator, i: int, j: int) -> tuple[float, float]:
    """Vote-weighted centroid of the 3x3 neighborhood in unwrapped (r, theta)."""
    total = rs = ts = 0.0
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            cell = _wrapped(acc, i + di, j + dj)
            if cell is None:
                continue
            v = float(acc.votes[cell])
            total += v
            rs += v * float(acc.r_center(i + di))
            ts += v * float(acc.theta_center(j + dj))
    return rs / total, ts / total


SUPPORT_BAND = 1.0


def _fit_support(line: SemanticLine, pts: np.ndarray, w: np.ndarray, dims: ImageDims) -> SemanticLine:
    """Weighted total-least-squares refit to the pixels within ``SUPPORT_BAND`` of ``line``."""
    near = np.abs(line.signed_distance(pts[:, 0], pts[:, 1], dims)) <= SUPPORT_BAND
    if np.count_nonzero(near) < 2:
        return line
    p, wt = pts[near], w[near]
    c = (p * wt[:, None]).sum(0) / wt.sum()
    d = p - c
    cov = (d * wt[:, None]).T @ d
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] <= evals[0] * (1 + 1e-9):
        return line
    dx, dy = evecs[:, 1]
    theta = math.atan2(-dy, dx)
    cx, cy = dims.center
    return SemanticLine((c[0] - cx) * math.sin(theta) + (c[1] - cy) * math.cos(theta), theta)


def detect_lines(acc: HoughAccumulator, k: int = 2, nms_r: int = 10, nms_theta: int = 10,
                 refine: bool = True, support: BoundaryMap | None = None) -> Peaks:
    """Greedy peak picking with windowed suppression, strongest first.

    With ``refine`` each peak moves to the vote-weighted centroid of its 3x3
    neighborhood; given the ``support`` map it is then refitted to the boundary
    pixels lying within one pixel of that line, since the accumulator alone
    cannot resolve the angle of a short digital segment to within one bin.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pts = w = None
    if refine and support is not None:
        ys, xs = np.nonzero(support.weights)
        pts = np.column_stack([xs, ys]).astype(np.float64)
        w = support.weights[ys, xs]
    votes = acc.votes.copy()
    found: list[DetectedLine] = []
    bins: list[tuple[int, int]] = []
    for _ in range(k):
        flat = int(np.argmax(votes))
        i, j = divmod(flat, acc.theta_bins)
        score = float(votes[i, j])
        if score <= 0.0:
            break
        if refine:
            line = SemanticLine(*_refine(acc, i, j))
            if pts is not None:
                line = _fit_support(line, pts, w, acc.dims)
        else:
            line = SemanticLine(float(acc.r_center(i)), float(acc.theta_center(j)))
        found.append(DetectedLine(line, score))
        bins.append((i, j))
        _suppress(votes, acc, i, j, nms_r, nms_theta)
    return Peaks(found, bins, len(found) < k)


def order_left_right(a: DetectedLine, b: DetectedLine, dims: ImageDims) -> tuple[DetectedLine, DetectedLine]:
    y = dims.height - 1
    xa = x_at_row_unclipped(a.line, y, dims)
    xb = x_at_row_unclipped(b.line, y, dims)
    if xa is None or xb is None:
        return (a, b) if a.line.r <= b.line.r else (b, a)
    return (a, b) if xa <= xb else (b, a)


def detect_boundaries(mask: ClassMask, theta_bins: int = 180, r_step: float = 1.0,
                      nms_r: int = 10, nms_theta: int = 10, refine: bool = True,
                      include_other: bool = False) -> tuple[DetectedLine, DetectedLine]:
    """Left and right soil boundary lines of the mask, ordered at the bottom row."""
    bmap = boundary_map(mask, include_other)
    peaks = detect_lines(hough(bmap, theta_bins, r_step), k=2, nms_r=nms_r, nms_theta=nms_theta,
                         refine=refine, support=bmap)
    if len(peaks.lines) < 2:
        raise DetectionFailure(peaks.lines)
    return order_left_right(peaks.lines[0], peaks.lines[1], mask.dims)


def format_lines(lines, dims: ImageDims) -> str:
    """``r theta score`` per line, strongest first."""
    out = [f"# lines w={dims.width} h={dims.height}"]
    for d in sorted(lines, key=lambda d: -d.score):
        out.append(f"{d.line.r:.6f} {d.line.theta:.6f} {d.score:.6f}")
    return "\n".join(out) + "\n"


def parse_lines(text: str) -> tuple[list[DetectedLine], ImageDims]:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise FormatError("empty lines file")
    head = parse_header(rows[0], "lines")
    dims = ImageDims(int(head["w"]), int(head["h"]))
    out = []
    for ln in rows[1:]:
        if ln.lstrip().startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise FormatError(f"expected 'r theta score', got {ln!r}")
        r, theta, score = map(float, parts)
        out.append(DetectedLine(SemanticLine(r, theta), score))
    return out, dims
