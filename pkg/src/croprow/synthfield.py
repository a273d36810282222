"""Procedural crop-row scenes with exact masks and boundary lines."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Entry, LineAnnotation, Manifest, save_lines, write_manifest
from .geometry import (
    ImageDims,
    SemanticLine,
    endpoints_to_line,
    line_to_border_segment,
    x_at_row_unclipped,
)
from .segmentation import AGRONAV8, ClassMask, save_mask, save_rgb

SOIL_RGB = (110, 85, 60)
VEGETATION_RGB = (60, 140, 50)
JITTER_SCALE = 60
SPECKLE_BAND = 3.0
# pixels this close to a line count as on it, never strictly inside the lane
ON_LINE_EPS = 1e-9


@dataclass(frozen=True)
class FieldSpec:
    dims: ImageDims
    left: SemanticLine
    right: SemanticLine
    seed: int = 0
    noise: float = 0.0
    speckle: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.noise < 1.0:
            raise ValueError(f"noise must lie in [0, 1), got {self.noise}")
        if not 0.0 <= self.speckle < 1.0:
            raise ValueError(f"speckle must lie in [0, 1), got {self.speckle}")
        h = self.dims.height
        for y in range(h // 2, h):
            xl = x_at_row_unclipped(self.left, y, self.dims)
            xr = x_at_row_unclipped(self.right, y, self.dims)
            if xl is None or xr is None or not xl < xr:
                raise ValueError(f"lane interior empty or unordered at row {y}")


@dataclass(eq=False)
class Scene:
    image: np.ndarray
    mask: ClassMask
    lines: LineAnnotation
    spec: FieldSpec


def _row_bounds(line: SemanticLine, dims: ImageDims) -> np.ndarray:
    ys = np.arange(dims.height, dtype=float)
    cx, cy = dims.center
    s = math.sin(line.theta)
    if abs(s) < 1e-12:
        return np.full(dims.height, np.nan)
    return cx + (line.r - (ys - cy) * math.cos(line.theta)) / s


def lane_mask(spec: FieldSpec) -> np.ndarray:
    """True on soil: strictly between the left and right lines, row by row."""
    dims = spec.dims
    xl = _row_bounds(spec.left, dims)[:, None]
    xr = _row_bounds(spec.right, dims)[:, None]
    xs = np.arange(dims.width, dtype=float)[None, :]
    with np.errstate(invalid="ignore"):
        return (xs > xl + ON_LINE_EPS) & (xs < xr - ON_LINE_EPS)


def render(spec: FieldSpec) -> Scene:
    spec.validate()
    dims = spec.dims
    soil = lane_mask(spec)
    rng = np.random.default_rng(spec.seed)

    # class seen by the camera: the true class, flipped at the speckle rate near the boundaries
    seen = soil.copy()
    if spec.speckle > 0:
        yy, xx = np.mgrid[0:dims.height, 0:dims.width]
        near = np.zeros_like(soil)
        for line in (spec.left, spec.right):
            near |= np.abs(line.signed_distance(xx, yy, dims)) <= SPECKLE_BAND
        flip = near & (rng.random(soil.shape) < spec.speckle)
        seen ^= flip

    base = np.where(seen[..., None], np.array(SOIL_RGB, float), np.array(VEGETATION_RGB, float))
    amp = spec.noise * JITTER_SCALE
    if amp > 0:
        base = base + rng.uniform(-amp, amp, size=base.shape)
    image = np.clip(np.rint(base), 0, 255).astype(np.uint8)

    ids = np.where(soil, AGRONAV8.id("soil"), AGRONAV8.id("vegetation")).astype(np.uint8)
    segs = (line_to_border_segment(spec.left, dims), line_to_border_segment(spec.right, dims))
    return Scene(image, ClassMask(ids, AGRONAV8), LineAnnotation(segs, dims), spec)


def perspective_lane(dims: ImageDims, bottom_left: float, bottom_right: float,
                     slope: float = 0.5) -> tuple[SemanticLine, SemanticLine]:
    """Two lines that converge toward the top; ``slope`` is the x shift per row."""
    h1 = dims.height - 1
    return _through(bottom_left, h1, slope, dims), _through(bottom_right, h1, -slope, dims)


def _through(x: float, y: float, slope: float, dims: ImageDims) -> SemanticLine:
    # direction (slope, -1) in pixel coordinates, i.e. moving up the image
    theta = math.atan2(1.0, slope)
    cx, cy = dims.center
    return SemanticLine((x - cx) * math.sin(theta) + (y - cy) * math.cos(theta), theta)


def random_spec(rng: np.random.Generator, dims: ImageDims, noise: float = 0.0,
                speckle: float = 0.0) -> FieldSpec:
    """A converging lane whose lines cross the top and bottom borders."""
    w = dims.width - 1
    h1 = dims.height - 1
    bl = rng.uniform(0.05, 0.35) * w
    br = rng.uniform(0.65, 0.95) * w
    tl = rng.uniform(0.30, 0.47) * w
    tr = rng.uniform(0.53, 0.70) * w
    left = endpoints_to_line((bl, h1), (tl, 0.0), dims)
    right = endpoints_to_line((br, h1), (tr, 0.0), dims)
    return FieldSpec(dims, left, right, seed=int(rng.integers(2**31)), noise=noise, speckle=speckle)


def write_corpus(root, specs: list[FieldSpec], split: str = "ground", crop: str = "synthetic",
                 prefix: str = "field") -> Manifest:
    """Render scenes into ``root`` following the corpus directory convention."""
    root = Path(root)
    for sub in ("images", "masks", "lines"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    width = max(4, len(str(len(specs) - 1)))
    for n, spec in enumerate(specs):
        iid = f"{prefix}{n:0{width}d}"
        scene = render(spec)
        img = root / "images" / f"{iid}.png"
        msk = root / "masks" / f"{iid}.png"
        lns = root / "lines" / f"{iid}.txt"
        save_rgb(scene.image, img)
        save_mask(scene.mask, msk)
        save_lines(scene.lines, lns)
        entries.append(Entry(iid, img, msk, lns, split, crop))
    manifest = Manifest(entries, root, AGRONAV8)
    write_manifest(manifest, root / "manifest.tsv")
    return manifest


def synth_specs(n: int, dims: ImageDims, seed: int = 0, noise: float = 0.0,
                speckle: float = 0.0) -> list[FieldSpec]:
    rng = np.random.default_rng(seed)
    return [random_spec(rng, dims, noise, speckle) for _ in range(n)]
