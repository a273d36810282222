"""Straight lines in (r, theta) form about the image center.

Conventions used throughout the package:

* pixel coordinates are ``(x, y)`` with ``y`` pointing down, pixel centers at
  integer positions, and the image center at ``((W - 1) / 2, (H - 1) / 2)``;
* ``theta`` in ``[0, pi)`` is the angle of the line against the horizontal
  axis, measured counter-clockwise as the image is viewed (so ``theta = pi/4``
  runs from bottom-left to top-right);
* ``r`` is signed: a point ``(x, y)`` lies on the line iff
  ``(x - cx) * sin(theta) + (y - cy) * cos(theta) == r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInputError, FormatError, InsufficientOverlapError, NoIntersectionError

Point = tuple[float, float]

_EPS = 1e-9


@dataclass(frozen=True)
class ImageDims:
    width: int
    height: int

    def __post_init__(self) -> None:
        for name in ("width", "height"):
            v = getattr(self, name)
            if int(v) != v or v < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def center(self) -> Point:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x: float, y: float, tol: float = _EPS) -> bool:
        return -tol <= x <= self.width - 1 + tol and -tol <= y <= self.height - 1 + tol

    def on_border(self, x: float, y: float, tol: float = _EPS) -> bool:
        if not self.contains(x, y, tol):
            return False
        return (abs(x) <= tol or abs(x - (self.width - 1)) <= tol
                or abs(y) <= tol or abs(y - (self.height - 1)) <= tol)


def _normalize(r: float, theta: float) -> tuple[float, float]:
    k = math.floor(theta / math.pi)
    theta = theta - k * math.pi
    if k % 2:
        r = -r
    # float rounding can land exactly on pi
    if theta >= math.pi:
        theta -= math.pi
        r = -r
    if theta < 0.0:
        theta = 0.0
    return r + 0.0, theta + 0.0


@dataclass(frozen=True)
class SemanticLine:
    """A line in canonical (r, theta) form; any input angle is normalized."""

    r: float
    theta: float

    def __post_init__(self) -> None:
        r, theta = _normalize(float(self.r), float(self.theta))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", theta)

    @property
    def normal(self) -> Point:
        return (math.sin(self.theta), math.cos(self.theta))

    @property
    def direction(self) -> Point:
        return (math.cos(self.theta), -math.sin(self.theta))

    def signed_distance(self, x, y, dims: ImageDims):
        """Perpendicular signed distance of point(s) to the line; works on arrays."""
        cx, cy = dims.center
        return (x - cx) * math.sin(self.theta) + (y - cy) * math.cos(self.theta) - self.r

    def foot(self, dims: ImageDims) -> Point:
        """Point of the line closest to the image center."""
        cx, cy = dims.center
        nx, ny = self.normal
        return (cx + self.r * nx, cy + self.r * ny)


@dataclass(frozen=True)
class BorderSegment:
    p0: Point
    p1: Point

    def midpoint(self) -> Point:
        return ((self.p0[0] + self.p1[0]) / 2.0, (self.p0[1] + self.p1[1]) / 2.0)

    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])


@dataclass(frozen=True)
class Centerline:
    points: tuple[Point, ...]
    row_range: tuple[int, int]

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def rows(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=int)


def endpoints_to_line(p0: Sequence[float], p1: Sequence[float], dims: ImageDims) -> SemanticLine:
    a = (float(p0[0]), float(p0[1]))
    b = (float(p1[0]), float(p1[1]))
    if a == b:
        raise DegenerateInputError(f"identical endpoints {a}")
    for p in (a, b):
        if not dims.contains(*p):
            raise DegenerateInputError(f"point {p} lies outside a {dims.width}x{dims.height} image")
    # order-independent result
    a, b = sorted((a, b))
    theta = math.atan2(-(b[1] - a[1]), b[0] - a[0])
    _, theta = _normalize(0.0, theta)
    cx, cy = dims.center
    mx, my = (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0
    r = (mx - cx) * math.sin(theta) + (my - cy) * math.cos(theta)
    return SemanticLine(r, theta)


def _snap(v: float, hi: float) -> float:
    if abs(v) <= _EPS:
        return 0.0
    if abs(v - hi) <= _EPS:
        return float(hi)
    return min(max(v, 0.0), float(hi))


def line_to_border_segment(line: SemanticLine, dims: ImageDims) -> BorderSegment:
    """Clip the line to the pixel-center rectangle ``[0, W-1] x [0, H-1]``."""
    px, py = line.foot(dims)
    dx, dy = line.direction
    t0, t1 = -math.inf, math.inf
    for p, d, hi in ((px, dx, dims.width - 1), (py, dy, dims.height - 1)):
        if abs(d) < 1e-15:
            if p < -_EPS or p > hi + _EPS:
                raise NoIntersectionError(f"{line} misses the {dims.width}x{dims.height} image")
            continue
        lo_t, hi_t = sorted(((0.0 - p) / d, (hi - p) / d))
        t0, t1 = max(t0, lo_t), min(t1, hi_t)
    if not t1 - t0 > _EPS:
        raise NoIntersectionError(f"{line} misses the {dims.width}x{dims.height} image")
    ends = []
    for t in (t0, t1):
        ends.append((_snap(px + t * dx, dims.width - 1), _snap(py + t * dy, dims.height - 1)))
    a, b = sorted(ends)
    return BorderSegment(a, b)


def x_at_row_unclipped(line: SemanticLine, y: float, dims: ImageDims) -> float | None:
    s = math.sin(line.theta)
    if abs(s) < 1e-12:
        return None
    cx, cy = dims.center
    return cx + (line.r - (y - cy) * math.cos(line.theta)) / s


def x_at_row(line: SemanticLine, y: int, dims: ImageDims) -> float | None:
    x = x_at_row_unclipped(line, y, dims)
    if x is None or x < -_EPS or x > dims.width - 1 + _EPS:
        return None
    return min(max(x, 0.0), float(dims.width - 1))


def rasterize_line(line: SemanticLine, dims: ImageDims) -> list[tuple[int, int]]:
    """Pixels of the line inside the image as an ordered 8-connected chain.

    Steep lines get one pixel per row, shallow lines one pixel per column.
    """
    cx, cy = dims.center
    s, c = math.sin(line.theta), math.cos(line.theta)
    if abs(line.theta - math.pi / 2) < math.pi / 4:
        ys = np.arange(dims.height, dtype=float)
        xs = cx + (line.r - (ys - cy) * c) / s
        xi = np.floor(xs + 0.5)
        keep = (xi >= 0) & (xi <= dims.width - 1)
        return [(int(x), int(y)) for x, y in zip(xi[keep], ys[keep])]
    xs = np.arange(dims.width, dtype=float)
    ys = cy + (line.r - (xs - cx) * s) / c
    yi = np.floor(ys + 0.5)
    keep = (yi >= 0) & (yi <= dims.height - 1)
    return [(int(x), int(y)) for x, y in zip(xs[keep], yi[keep])]


def bottom_rows_start(height: int, fraction: float) -> int:
    """First row of the bottom ``fraction`` of the image: ceil((1 - fraction) * height)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    # round away float dust such as 66.00000000000001
    return max(0, math.ceil(round((1.0 - fraction) * height, 9)))


def centerline(l1: SemanticLine, l2: SemanticLine, dims: ImageDims, fraction: float = 1 / 3) -> Centerline:
    if l1 == l2:
        raise DegenerateInputError("centerline of a line with itself is undefined")
    points = []
    for y in range(bottom_rows_start(dims.height, fraction), dims.height):
        x1 = x_at_row(l1, y, dims)
        x2 = x_at_row(l2, y, dims)
        if x1 is None or x2 is None:
            continue
        points.append(((x1 + x2) / 2.0, y))
    if len(points) < 2:
        raise InsufficientOverlapError(len(points))
    return Centerline(tuple(points), (points[0][1], points[-1][1]))


def format_centerline(cl: Centerline, dims: ImageDims, fraction: float) -> str:
    out = [f"# centerline w={dims.width} h={dims.height} fraction={fraction:g}"]
    out.extend(f"{y} {x:.3f}" for x, y in cl.points)
    return "\n".join(out) + "\n"


def parse_header(line: str, tag: str) -> dict[str, str]:
    parts = line.lstrip("#").split()
    if not parts or parts[0] != tag:
        raise FormatError(f"expected '# {tag} ...' header, got {line!r}")
    fields = {}
    for kv in parts[1:]:
        k, _, v = kv.partition("=")
        fields[k] = v
    return fields


def parse_centerline(text: str) -> tuple[Centerline, ImageDims, float]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty centerline file")
    head = parse_header(lines[0], "centerline")
    dims = ImageDims(int(head["w"]), int(head["h"]))
    pts = []
    for ln in lines[1:]:
        y, x = ln.split()
        pts.append((float(x), int(y)))
    if not pts:
        raise FormatError("centerline file has no points")
    return Centerline(tuple(pts), (pts[0][1], pts[-1][1])), dims, float(head["fraction"])


def perpendicular_distance(points: Iterable[Point], line: SemanticLine, dims: ImageDims) -> np.ndarray:
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    return np.abs(line.signed_distance(pts[:, 0], pts[:, 1], dims))
