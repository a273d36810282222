"""Corpus layout: ``manifest.tsv`` plus ``images/``, ``masks/``, ``lines/``.

Manifest rows are tab-separated ``id image mask lines split crop``; empty or
``-`` marks an absent optional path. ``#`` starts a comment, except the
directive ``# taxonomy: NAME`` which declares the mask taxonomy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .errors import DuplicateIdError, FormatError, MissingFileError, UnknownSplitError
from .geometry import BorderSegment, ImageDims, SemanticLine, endpoints_to_line
from .segmentation import AGRONAV8, Taxonomy, get_taxonomy

SPLITS = ("ground", "aerial")
HEADER = ("id", "image", "mask", "lines", "split", "crop")
SNAP_TOL = 0.5


@dataclass(frozen=True)
class Entry:
    image_id: str
    image: Path
    mask: Path | None
    lines: Path | None
    split: str
    crop: str


@dataclass
class Manifest:
    entries: list[Entry]
    root: Path
    taxonomy: Taxonomy = AGRONAV8

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    def get(self, image_id: str) -> Entry:
        for e in self.entries:
            if e.image_id == image_id:
                return e
        raise KeyError(image_id)


def _opt(field_: str) -> str | None:
    field_ = field_.strip()
    return None if field_ in ("", "-") else field_


def load_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest {path} not found")
    root = path.parent
    entries: list[Entry] = []
    seen: set[str] = set()
    taxonomy = AGRONAV8
    for n, raw in enumerate(path.read_text().splitlines(), 1):
        if raw.startswith("#"):
            key, sep, val = raw[1:].partition(":")
            if sep and key.strip() == "taxonomy":
                taxonomy = get_taxonomy(val.strip())
            continue
        if not raw.strip():
            continue
        cols = raw.split("\t")
        if len(cols) != len(HEADER):
            raise FormatError(f"{path}:{n}: expected {len(HEADER)} tab-separated fields, got {len(cols)}")
        iid, image, mask, lines, split, crop = (c.strip() for c in cols)
        if tuple(c.strip() for c in cols) == HEADER:
            continue
        if iid in seen:
            raise DuplicateIdError(f"{path}:{n}: duplicate image id {iid!r}")
        seen.add(iid)
        if split not in SPLITS:
            raise UnknownSplitError(f"{path}:{n}: entry {iid!r} has unknown split {split!r}")
        image_p = root / image
        mask_p = root / m if (m := _opt(mask)) else None
        lines_p = root / ln if (ln := _opt(lines)) else None
        if check_files:
            for p in (image_p, mask_p, lines_p):
                if p is not None and not p.is_file():
                    raise MissingFileError(f"{path}:{n}: entry {iid!r} references missing file {p}")
        entries.append(Entry(iid, image_p, mask_p, lines_p, split, crop))
    return Manifest(entries, root, taxonomy)


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)

    def rel(p: Path | None) -> str:
        if p is None:
            return "-"
        try:
            return Path(p).relative_to(path.parent).as_posix()
        except ValueError:
            return Path(p).as_posix()

    out = [f"# taxonomy: {manifest.taxonomy.name}", "#" + "\t".join(HEADER)]
    for e in manifest.entries:
        out.append("\t".join((e.image_id, rel(e.image), rel(e.mask), rel(e.lines), e.split, e.crop)))
    path.write_text("\n".join(out) + "\n")


def iterate(manifest: Manifest, split: str | Sequence[str] | None = None,
            crop: str | Sequence[str] | None = None) -> Iterator[Entry]:
    splits = {split} if isinstance(split, str) else (set(split) if split else None)
    crops = {crop} if isinstance(crop, str) else (set(crop) if crop else None)
    for e in manifest.entries:
        if splits is not None and e.split not in splits:
            continue
        if crops is not None and e.crop not in crops:
            continue
        yield e


# ---------------------------------------------------------------- line annotations

@dataclass(frozen=True)
class LineAnnotation:
    segments: tuple[BorderSegment, BorderSegment]
    dims: ImageDims

    def __post_init__(self) -> None:
        if len(self.segments) != 2:
            raise FormatError(f"expected exactly two segments, got {len(self.segments)}")

    def lines(self) -> list[SemanticLine]:
        return [endpoints_to_line(s.p0, s.p1, self.dims) for s in self.segments]


def snap_to_border(x: float, y: float, dims: ImageDims, tol: float = SNAP_TOL) -> tuple[float, float]:
    """Move a near-border point exactly onto the nearest edge."""
    w1, h1 = dims.width - 1, dims.height - 1
    if not (-tol <= x <= w1 + tol and -tol <= y <= h1 + tol):
        raise FormatError(f"endpoint ({x:g}, {y:g}) lies outside a {dims.width}x{dims.height} image")
    x, y = min(max(x, 0.0), float(w1)), min(max(y, 0.0), float(h1))
    gaps = [(x, "x0"), (w1 - x, "x1"), (y, "y0"), (h1 - y, "y1")]
    gap, edge = min(gaps)
    if gap > tol:
        raise FormatError(f"endpoint ({x:g}, {y:g}) is {gap:g} px from the image border")
    if edge == "x0":
        x = 0.0
    elif edge == "x1":
        x = float(w1)
    elif edge == "y0":
        y = 0.0
    else:
        y = float(h1)
    return x, y


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def parse_line_annotation(text: str, dims: ImageDims) -> LineAnnotation:
    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if len(rows) != 2:
        raise FormatError(f"line annotation needs exactly 2 lines, got {len(rows)}")
    segs = []
    for r in rows:
        parts = r.split()
        if len(parts) != 4:
            raise FormatError(f"expected 'x0 y0 x1 y1', got {r!r}")
        try:
            x0, y0, x1, y1 = (float(p) for p in parts)
        except ValueError:
            raise FormatError(f"non-numeric coordinates in {r!r}") from None
        if not all(math.isfinite(v) for v in (x0, y0, x1, y1)):
            raise FormatError(f"non-finite coordinates in {r!r}")
        p0, p1 = snap_to_border(x0, y0, dims), snap_to_border(x1, y1, dims)
        if p0 == p1:
            raise FormatError(f"segment {r!r} has identical endpoints")
        segs.append(BorderSegment(p0, p1))
    ann = LineAnnotation((segs[0], segs[1]), dims)
    a, b = ann.lines()
    if a == b:
        raise FormatError("both annotated segments describe the same line")
    return ann


def format_line_annotation(ann: LineAnnotation) -> str:
    return "".join(" ".join(_num(v) for v in (*s.p0, *s.p1)) + "\n" for s in ann.segments)


def load_lines(path, dims: ImageDims) -> LineAnnotation:
    return parse_line_annotation(Path(path).read_text(), dims)


def save_lines(ann: LineAnnotation, path) -> None:
    Path(path).write_text(format_line_annotation(ann))
