"""Class taxonomies, ExG vegetation segmentation, mask I/O, label remapping,
overlay blending and IoU scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidLabelError,
    TaxonomyMismatchError,
)
from .geometry import ImageDims

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class Taxonomy:
    name: str
    labels: tuple[str, ...]
    colors: tuple[RGB, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.colors):
            raise ValueError("labels and colors differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in taxonomy {self.name}")
        if not 0 < len(self.labels) <= 256:
            raise ValueError("taxonomy must have 1..256 classes")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> list[tuple[int, str, RGB]]:
        return [(i, lab, col) for i, (lab, col) in enumerate(zip(self.labels, self.colors))]

    def id(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"{label!r} is not a {self.name} class") from None

    def palette(self) -> np.ndarray:
        return np.array(self.colors, dtype=np.uint8).reshape(-1, 3)


AGRONAV8 = Taxonomy(
    "AGRONAV8",
    ("soil", "vegetation", "sky", "human", "vehicle", "building", "fence", "other"),
    ((128, 64, 128), (107, 142, 35), (70, 130, 180), (220, 20, 60),
     (0, 0, 142), (70, 70, 70), (190, 153, 153), (0, 0, 0)),
)

AGROSCAPES9 = Taxonomy(
    "AGROSCAPES9",
    ("soil", "crop", "weed", "sky", "human", "vehicle", "building", "fence", "other"),
    ((128, 64, 128), (107, 142, 35), (152, 251, 152), (70, 130, 180), (220, 20, 60),
     (0, 0, 142), (70, 70, 70), (190, 153, 153), (0, 0, 0)),
)

# standard Cityscapes train-id order and palette
CITYSCAPES19 = Taxonomy(
    "CITYSCAPES19",
    ("road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
     "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
     "truck", "bus", "train", "motorcycle", "bicycle"),
    ((128, 64, 128), (244, 35, 232), (70, 70, 70), (102, 102, 156), (190, 153, 153),
     (153, 153, 153), (250, 170, 30), (220, 220, 0), (107, 142, 35), (152, 251, 152),
     (70, 130, 180), (220, 20, 60), (255, 0, 0), (0, 0, 142), (0, 0, 70),
     (0, 60, 100), (0, 80, 100), (0, 0, 230), (119, 11, 32)),
)

TAXONOMIES: dict[str, Taxonomy] = {t.name: t for t in (AGRONAV8, AGROSCAPES9, CITYSCAPES19)}


def get_taxonomy(name: str) -> Taxonomy:
    try:
        return TAXONOMIES[name.upper()]
    except KeyError:
        raise KeyError(f"unknown taxonomy {name!r}; known: {', '.join(TAXONOMIES)}") from None


@dataclass(eq=False)
class ClassMask:
    data: np.ndarray
    taxonomy: Taxonomy = AGRONAV8

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                bad = int(np.flatnonzero((data < 0) | (data > 255))[0])
                raise InvalidLabelError(int(data.flat[bad]), bad, self.taxonomy.name)
            data = data.astype(np.uint8)
        validate_ids(data, self.taxonomy)
        data = data.copy() if data.flags.writeable else data
        data.flags.writeable = False
        self.data = data

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.data.shape[1], self.data.shape[0])

    def histogram(self) -> dict[int, int]:
        counts = np.bincount(self.data.ravel(), minlength=len(self.taxonomy))
        return {i: int(c) for i, c in enumerate(counts) if c}

    def colorize(self) -> np.ndarray:
        return self.taxonomy.palette()[self.data]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClassMask):
            return NotImplemented
        return self.taxonomy == other.taxonomy and np.array_equal(self.data, other.data)


def validate_ids(data: np.ndarray, taxonomy: Taxonomy) -> None:
    bad = np.flatnonzero(data.ravel() >= len(taxonomy))
    if bad.size:
        i = int(bad[0])
        raise InvalidLabelError(int(data.flat[i]), i, taxonomy.name)


# ---------------------------------------------------------------- ExG + Otsu

FALLBACK_THRESHOLD = 20


def _as_rgb(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected HxWx3 uint8 RGB image, got {img.dtype} {img.shape}")
    return img


def exg(image) -> np.ndarray:
    """Excess green ``2G - R - B`` as int16 in [-510, 510]."""
    img = _as_rgb(image).astype(np.int16)
    return 2 * img[..., 1] - img[..., 0] - img[..., 2]


def otsu_threshold(values: np.ndarray, lo: int = -510, hi: int = 510) -> int | None:
    """Otsu threshold over integer values in ``[lo, hi]``; ``None`` for a single-valued input.

    Pixels ``> t`` form the upper class. Where several thresholds tie for the
    maximal between-class variance the middle one is returned.
    """
    hist = np.bincount((values.ravel().astype(np.int64) - lo), minlength=hi - lo + 1).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        return None
    levels = np.arange(lo, hi + 1, dtype=np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * levels)
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    mu_t = m0[-1] / total
    var = np.zeros_like(hist)
    # between-class variance up to the constant 1/total^2
    var[valid] = (mu_t * w0[valid] - m0[valid]) ** 2 / (w0[valid] * w1[valid])
    best = var.max()
    ties = np.flatnonzero(var >= best * (1 - 1e-12))
    return int(lo + (ties[0] + ties[-1]) // 2)


@dataclass(frozen=True)
class SegmentResult:
    mask: ClassMask
    threshold: int
    degenerate: bool


def segment_exg(image, threshold: int | str = "auto") -> SegmentResult:
    """Vegetation where ExG exceeds the threshold, soil elsewhere (AGRONAV8)."""
    g = exg(image)
    if g.size == 0:
        raise ValueError("empty image")
    degenerate = False
    if threshold == "auto":
        t = otsu_threshold(g)
        if t is None:
            t, degenerate = FALLBACK_THRESHOLD, True
    else:
        t = int(threshold)
    soil, veg = AGRONAV8.id("soil"), AGRONAV8.id("vegetation")
    data = np.where(g > t, veg, soil).astype(np.uint8)
    return SegmentResult(ClassMask(data, AGRONAV8), t, degenerate)


# ---------------------------------------------------------------- mask I/O

def save_mask(mask: ClassMask, path) -> None:
    Image.fromarray(np.ascontiguousarray(mask.data), mode="L").save(Path(path), format="PNG")


def load_mask(path, taxonomy: Taxonomy = AGRONAV8) -> ClassMask:
    with Image.open(Path(path)) as im:
        if im.mode not in ("L", "P"):
            raise FormatError(f"{path}: expected single-channel 8-bit PNG, got mode {im.mode}")
        data = np.array(im, dtype=np.uint8)
    return ClassMask(data, taxonomy)


def load_rgb(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.array(im.convert("RGB"), dtype=np.uint8)


def save_rgb(image: np.ndarray, path) -> None:
    Image.fromarray(_as_rgb(image), mode="RGB").save(Path(path), format="PNG")


# ---------------------------------------------------------------- remapping

@dataclass(frozen=True)
class RemapTable:
    source: Taxonomy
    target: Taxonomy
    mapping: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.mapping) != len(self.source):
            raise ValueError(f"remap table must cover all {len(self.source)} {self.source.name} ids")
        if any(not 0 <= t < len(self.target) for t in self.mapping):
            raise ValueError(f"remap table produces ids outside {self.target.name}")

    @classmethod
    def from_labels(cls, source: Taxonomy, target: Taxonomy, pairs: Mapping[str, str]) -> "RemapTable":
        missing = [lab for lab in source.labels if lab not in pairs]
        if missing:
            raise FormatError(f"remap table leaves {', '.join(missing)} unmapped")
        return cls(source, target, tuple(target.id(pairs[lab]) for lab in source.labels))

    @classmethod
    def identity(cls, taxonomy: Taxonomy) -> "RemapTable":
        return cls(taxonomy, taxonomy, tuple(range(len(taxonomy))))

    def then(self, other: "RemapTable") -> "RemapTable":
        if other.source != self.target:
            raise TaxonomyMismatchError(f"cannot compose {self.target.name} with {other.source.name}")
        return RemapTable(self.source, other.target, tuple(other.mapping[t] for t in self.mapping))

    def __getitem__(self, label: str) -> str:
        return self.target.labels[self.mapping[self.source.id(label)]]


def parse_remap(text: str, source: Taxonomy, target: Taxonomy) -> RemapTable:
    pairs: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        src, arrow, dst = line.partition("->")
        if not arrow:
            raise FormatError(f"line {n}: expected 'source -> target', got {raw!r}")
        src, dst = src.strip().lower(), dst.strip().lower()
        if src not in source.labels:
            raise FormatError(f"line {n}: {src!r} is not a {source.name} class")
        if dst not in target.labels:
            raise FormatError(f"line {n}: {dst!r} is not a {target.name} class")
        if src in pairs and pairs[src] != dst:
            raise FormatError(f"line {n}: {src!r} mapped twice")
        pairs[src] = dst
    return RemapTable.from_labels(source, target, pairs)


def load_remap(path, source: Taxonomy, target: Taxonomy) -> RemapTable:
    return parse_remap(Path(path).read_text(), source, target)


def builtin_remap(source: Taxonomy, target: Taxonomy = AGRONAV8) -> RemapTable:
    name = f"{source.name.lower()}_to_{target.name.lower()}.txt"
    try:
        text = resources.files("croprow").joinpath("data", name).read_text()
    except FileNotFoundError:
        raise KeyError(f"no built-in remap from {source.name} to {target.name}") from None
    return parse_remap(text, source, target)


def remap(mask: ClassMask, table: RemapTable) -> ClassMask:
    if mask.taxonomy != table.source:
        raise TaxonomyMismatchError(
            f"mask is {mask.taxonomy.name} but table maps from {table.source.name}")
    lut = np.array(table.mapping, dtype=np.uint8)
    return ClassMask(lut[mask.data], table.target)


# ---------------------------------------------------------------- overlay

def overlay(image, mask: ClassMask) -> np.ndarray:
    """Equal-weight blend of the image with the colorized mask, rounding halves up."""
    img = _as_rgb(image)
    if img.shape[:2] != mask.data.shape:
        raise DimensionMismatchError(f"image {img.shape[:2]} vs mask {mask.data.shape}")
    total = img.astype(np.uint16) + mask.colorize().astype(np.uint16)
    return ((total + 1) >> 1).astype(np.uint8)


# ---------------------------------------------------------------- IoU

@dataclass(frozen=True)
class ClassIoU:
    label: str
    intersection: int
    union: int

    @property
    def iou(self) -> float | None:
        return self.intersection / self.union if self.union else None


@dataclass(frozen=True)
class IoUReport:
    per_class: tuple[ClassIoU, ...]
    class_subset: tuple[str, ...] | None = None

    def mean(self, labels: Iterable[str] | None = None) -> float | None:
        wanted = None if labels is None else set(labels)
        vals = [c.iou for c in self.per_class
                if c.union and (wanted is None or c.label in wanted)]
        return math.fsum(vals) / len(vals) if vals else None

    @property
    def miou(self) -> float | None:
        return self.mean(self.class_subset)

    @property
    def miou_all(self) -> float | None:
        return self.mean()

    def merge(self, other: "IoUReport") -> "IoUReport":
        if [c.label for c in self.per_class] != [c.label for c in other.per_class]:
            raise TaxonomyMismatchError("cannot merge reports over different classes")
        return IoUReport(
            tuple(ClassIoU(a.label, a.intersection + b.intersection, a.union + b.union)
                  for a, b in zip(self.per_class, other.per_class)),
            self.class_subset,
        )

    def format(self) -> str:
        out = []
        for c in self.per_class:
            iou = "nan" if c.iou is None else f"{c.iou:.4f}"
            out.append(f"{c.label.replace(' ', '_')} {c.intersection} {c.union} {iou}")
        out.append(f"miou {_fmt4(self.miou_all)}")
        if self.class_subset is not None:
            out.append(f"miou[{','.join(self.class_subset)}] {_fmt4(self.miou)}")
        return "\n".join(out) + "\n"


def _fmt4(v: float | None) -> str:
    return "nan" if v is None else f"{v:.4f}"


def empty_iou_report(taxonomy: Taxonomy, class_subset: Sequence[str] | None = None) -> IoUReport:
    return IoUReport(tuple(ClassIoU(lab, 0, 0) for lab in taxonomy.labels),
                     None if class_subset is None else tuple(class_subset))


def miou(pred: ClassMask, gt: ClassMask, class_subset: Sequence[str] | None = None) -> IoUReport:
    if pred.taxonomy != gt.taxonomy:
        raise TaxonomyMismatchError(f"{pred.taxonomy.name} vs {gt.taxonomy.name}")
    if pred.data.shape != gt.data.shape:
        raise DimensionMismatchError(f"pred {pred.data.shape} vs gt {gt.data.shape}")
    if class_subset is not None:
        for lab in class_subset:
            pred.taxonomy.id(lab)
    n = len(pred.taxonomy)
    conf = np.bincount(gt.data.ravel().astype(np.int64) * n + pred.data.ravel(),
                       minlength=n * n).reshape(n, n)
    inter = np.diag(conf)
    union = conf.sum(0) + conf.sum(1) - inter
    per_class = tuple(ClassIoU(lab, int(i), int(u))
                      for lab, i, u in zip(pred.taxonomy.labels, inter, union))
    return IoUReport(per_class, None if class_subset is None else tuple(class_subset))
