"""``croprow`` command-line front end.

Exit codes: 0 success, 1 unexpected error, 2 detection failure, 3 I/O or
input-format error, 4 usage error. Failures print one ``E<code> <message>``
line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from PIL import Image

from . import plots
from .bench import MIN_FRAMES, FrameSource, run_bench, write_report
from .config import PipelineConfig, load_config
from .dataset import Entry, iterate, load_lines, load_manifest
from .errors import (
    CroprowError,
    DetectionFailure,
    FormatError,
    InsufficientOverlapError,
    ManifestError,
)
from .evaluation import (
    SimilarityParams,
    aggregate,
    format_line_report,
    match_lines,
)
from .geometry import ImageDims, centerline, endpoints_to_line, format_centerline
from .linedetect import boundary_map, detect_lines, format_lines, hough, order_left_right, parse_lines
from .pipeline import parallel_map, process_frame
from .segmentation import (
    AGRONAV8,
    IoUReport,
    builtin_remap,
    empty_iou_report,
    get_taxonomy,
    load_mask,
    load_remap,
    load_rgb,
    miou,
    overlay,
    remap,
    save_mask,
    save_rgb,
    segment_exg,
)
from .synthfield import synth_specs, write_corpus

EXIT_OK, EXIT_ERROR, EXIT_DETECTION, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(code: int, message: str) -> int:
    print(f"E{code} {' '.join(str(message).split())}", file=sys.stderr)
    return code


def _code_for(exc: BaseException) -> int:
    if isinstance(exc, (DetectionFailure, InsufficientOverlapError)):
        return EXIT_DETECTION
    if isinstance(exc, (OSError, FormatError, ManifestError)):
        return EXIT_IO
    if isinstance(exc, (UsageError, KeyError, ValueError)):
        return EXIT_USAGE
    return EXIT_ERROR


def _stem(path) -> str:
    name = Path(path).name
    for suffix in (".lines.txt", ".mask.png", ".overlay.png", ".centerline.txt"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def _is_mask_file(path) -> bool:
    with Image.open(path) as im:
        return im.mode in ("L", "P")


def _image_dims(path) -> ImageDims:
    with Image.open(path) as im:
        return ImageDims(*im.size)


# ---------------------------------------------------------------- run

def _run_input(job: tuple[str, PipelineConfig, str]) -> tuple[int, str]:
    path, cfg, taxonomy = job
    out = Path(cfg.out)
    stem = _stem(path)
    cl_path = out / f"{stem}.centerline.txt"
    ln_path = out / f"{stem}.lines.txt"
    try:
        if _is_mask_file(path):
            image, mask = None, load_mask(path, get_taxonomy(taxonomy))
        else:
            image, mask = load_rgb(path), None
        try:
            frame = process_frame(cfg, image=image, mask=mask)
        except (DetectionFailure, InsufficientOverlapError) as exc:
            for stale in (cl_path, ln_path):
                stale.unlink(missing_ok=True)
            partial = getattr(exc, "frame", None)
            if partial is not None:
                save_rgb(partial.overlay, out / f"{stem}.overlay.png")
            raise
        dims = frame.mask.dims
        save_rgb(frame.overlay, out / f"{stem}.overlay.png")
        ln_path.write_text(format_lines([frame.left, frame.right], dims))
        cl_path.write_text(format_centerline(frame.centerline, dims, cfg.fraction))
        if cfg.figures:
            src = image if image is not None else frame.mask.colorize()
            plots.plot_frame(src, frame.overlay, [frame.left, frame.right], frame.centerline,
                             dims, out / f"{stem}.figure.png", title=stem)
        return EXIT_OK, f"{stem} ok"
    except Exception as exc:
        return _code_for(exc), f"{path}: {type(exc).__name__}: {exc}"


def cmd_run(args, cfg: PipelineConfig) -> int:
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    for p in args.inputs:
        if not Path(p).is_file():
            return _fail(EXIT_IO, f"input {p} not found")
    results = parallel_map(_run_input, [(p, cfg, args.taxonomy) for p in args.inputs], cfg.workers)
    worst = EXIT_OK
    for code, msg in results:
        if code:
            _fail(code, msg)
            worst = worst or code
        else:
            print(msg)
    return worst


# ---------------------------------------------------------------- single stages

def cmd_segment(args, cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in args.images:
        res = segment_exg(load_rgb(p), cfg.seg_threshold)
        save_mask(res.mask, out / f"{_stem(p)}.mask.png")
        flag = " degenerate" if res.degenerate else ""
        print(f"{_stem(p)} threshold={res.threshold}{flag}")
    return EXIT_OK


def cmd_overlay(args, cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mask = load_mask(args.mask, get_taxonomy(args.taxonomy))
    save_rgb(overlay(load_rgb(args.image), mask), out / f"{_stem(args.image)}.overlay.png")
    return EXIT_OK


def cmd_lines(args, cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mask = load_mask(args.mask, get_taxonomy(args.taxonomy))
    if mask.taxonomy != AGRONAV8:
        mask = remap(mask, builtin_remap(mask.taxonomy))
    bmap = boundary_map(mask, cfg.include_other)
    acc = hough(bmap, cfg.theta_bins, cfg.r_step)
    peaks = detect_lines(acc, cfg.k, cfg.nms_r, cfg.nms_theta, cfg.refine, support=bmap)
    stem = _stem(args.mask)
    (out / f"{stem}.lines.txt").write_text(format_lines(peaks.lines, mask.dims))
    if args.dump_acc:
        (out / f"{stem}.acc.txt").write_text(acc.dump())
    if peaks.short:
        print(f"W {stem}: found {len(peaks.lines)} of {cfg.k} lines", file=sys.stderr)
    return EXIT_OK


def cmd_centerline(args, cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dets, dims = parse_lines(Path(args.lines).read_text())
    if len(dets) < 2:
        raise DetectionFailure(dets)
    left, right = order_left_right(dets[0], dets[1], dims)
    cl = centerline(left.line, right.line, dims, cfg.fraction)
    (out / f"{_stem(args.lines)}.centerline.txt").write_text(format_centerline(cl, dims, cfg.fraction))
    return EXIT_OK


def cmd_remap(args, cfg: PipelineConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    source, target = get_taxonomy(args.source), get_taxonomy(args.target)
    table = load_remap(args.table, source, target) if args.table else builtin_remap(source, target)
    for p in args.masks:
        save_mask(remap(load_mask(p, source), table), out / f"{_stem(p)}.png")
    return EXIT_OK


# ---------------------------------------------------------------- evaluation

def read_predicted_lines(path, dims: ImageDims) -> list:
    """Predicted lines from either a ``# lines`` file or ``x0 y0 x1 y1`` rows."""
    text = Path(path).read_text()
    rows = [r for r in text.splitlines() if r.strip()]
    if rows and rows[0].lstrip().startswith("# lines"):
        dets, fdims = parse_lines(text)
        if fdims != dims:
            raise FormatError(f"{path}: lines file is for {fdims.width}x{fdims.height}, image is {dims.width}x{dims.height}")
        return [d.line for d in dets]
    lines = []
    for r in rows:
        r = r.split("#", 1)[0].strip()
        if not r:
            continue
        parts = r.split()
        if len(parts) != 4:
            raise FormatError(f"{path}: expected 'x0 y0 x1 y1', got {r!r}")
        x0, y0, x1, y1 = map(float, parts)
        lines.append(endpoints_to_line((x0, y0), (x1, y1), dims))
    return lines


def _pred_path(pred_dir: Path, iid: str, suffixes: Sequence[str]) -> Path | None:
    for suf in suffixes:
        p = pred_dir / f"{iid}{suf}"
        if p.is_file():
            return p
    return None


def _eval_lines_entry(job: tuple[Entry, str, float]):
    entry, pred_dir, threshold = job
    dims = _image_dims(entry.image)
    gts = load_lines(entry.lines, dims).lines()
    p = _pred_path(Path(pred_dir), entry.image_id, (".lines.txt", ".txt"))
    preds = read_predicted_lines(p, dims) if p is not None else []
    rep = match_lines(preds, gts, dims, SimilarityParams(threshold))
    return entry.image_id, entry.split, rep, p is None


def evaluate_lines(manifest_path, pred_dir, cfg: PipelineConfig, split=None):
    manifest = load_manifest(manifest_path)
    entries = [e for e in iterate(manifest, split) if e.lines is not None]
    skipped = [e.image_id for e in iterate(manifest, split) if e.lines is None]
    jobs = [(e, str(pred_dir), cfg.similarity_threshold) for e in entries]
    rows = parallel_map(_eval_lines_entry, jobs, cfg.workers)
    return rows, skipped


def cmd_eval_lines(args, cfg: PipelineConfig) -> int:
    rows, skipped = evaluate_lines(args.manifest, args.pred, cfg, args.split)
    if not rows:
        return _fail(EXIT_USAGE, "no manifest entries carry line annotations")
    summary = aggregate([r[2] for r in rows], [r[1] for r in rows])
    text = format_line_report([(iid, grp, rep) for iid, grp, rep, _ in rows], summary)
    notes = [f"# missing-prediction {iid}" for iid, _, _, missing in rows if missing]
    notes += [f"# no-annotation {iid}" for iid in skipped]
    if notes:
        text += "\n".join(notes) + "\n"
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_lines.txt").write_text(text)
    if cfg.figures:
        plots.plot_prf(summary, out / "eval_lines.png")
    sys.stdout.write(text)
    return EXIT_OK


def _eval_seg_entry(job):
    entry, pred_dir, taxonomy_name, subset = job
    taxonomy = get_taxonomy(taxonomy_name)
    p = _pred_path(Path(pred_dir), entry.image_id, (".mask.png", ".png"))
    if p is None:
        return entry.image_id, entry.split, None
    return entry.image_id, entry.split, miou(load_mask(p, taxonomy), load_mask(entry.mask, taxonomy), subset)


def evaluate_seg(manifest_path, pred_dir, cfg: PipelineConfig, subset=None, split=None):
    manifest = load_manifest(manifest_path)
    tax = manifest.taxonomy
    if subset:
        unknown = [c for c in subset if c not in tax.labels]
        if unknown:
            raise UsageError(f"unknown class(es) {', '.join(unknown)} for {tax.name}")
    entries = [e for e in iterate(manifest, split) if e.mask is not None]
    jobs = [(e, str(pred_dir), tax.name, subset) for e in entries]
    rows = parallel_map(_eval_seg_entry, jobs, cfg.workers)
    sections: dict[str, IoUReport] = {"overall": empty_iou_report(tax, subset)}
    for _, split_, rep in rows:
        if rep is None:
            continue
        sections.setdefault(split_, empty_iou_report(tax, subset))
        sections[split_] = sections[split_].merge(rep)
        sections["overall"] = sections["overall"].merge(rep)
    missing = [iid for iid, _, rep in rows if rep is None]
    return sections, missing


def cmd_eval_seg(args, cfg: PipelineConfig) -> int:
    subset = [c.strip() for c in args.classes.split(",")] if args.classes else None
    sections, missing = evaluate_seg(args.manifest, args.pred, cfg, subset, args.split)
    order = ["overall"] + sorted(k for k in sections if k != "overall")
    text = "".join(f"# group {k}\n" + sections[k].format() for k in order)
    if missing:
        text += "".join(f"# missing-prediction {iid}\n" for iid in missing)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_seg.txt").write_text(text)
    if cfg.figures:
        plots.plot_iou({k: sections[k] for k in order}, out / "eval_seg.png")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- synth / bench

def cmd_synth(args, cfg: PipelineConfig) -> int:
    dims = ImageDims(args.width or args.size, args.height or args.size)
    specs = synth_specs(args.n, dims, args.seed, args.noise, args.speckle)
    manifest = write_corpus(cfg.out, specs, split=args.split, crop=args.crop)
    print(f"wrote {len(manifest)} scenes to {cfg.out}")
    return EXIT_OK


def cmd_bench(args, cfg: PipelineConfig) -> int:
    if args.frames < MIN_FRAMES:
        raise UsageError(f"--frames must be >= {MIN_FRAMES}")
    if args.manifest:
        source = FrameSource(kind="manifest", manifest=str(args.manifest))
    else:
        source = FrameSource(size=args.size, seed=args.seed, count=args.distinct, noise=args.noise)
    report = run_bench(source, cfg, args.frames, cfg.workers)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "bench.txt")
    if cfg.figures:
        plots.plot_bench(report.stage_ms, report.fps, out / "bench.png")
    sys.stdout.write(report.format())
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _config_flags(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--config", default=default, help="key = value settings file")
    p.add_argument("--jobs", type=int, default=default, help="worker processes (default: hardware threads)")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--seg-threshold", dest="threshold", default=default, help="'auto' or integer ExG cutoff")
    p.add_argument("--theta-bins", type=int, default=default)
    p.add_argument("--r-step", type=float, default=default)
    p.add_argument("--nms-r", type=int, default=default)
    p.add_argument("--nms-theta", type=int, default=default)
    p.add_argument("-k", type=int, default=default, help="lines to extract (lines subcommand)")
    p.add_argument("--no-refine", dest="refine", action="store_false", default=default)
    p.add_argument("--include-other", action="store_true", default=default,
                   help="count soil/non-vegetation transitions as boundary")
    p.add_argument("--fraction", type=float, default=default, help="bottom fraction of rows for the centerline")
    p.add_argument("--sim-threshold", dest="similarity_threshold", type=float, default=default)
    p.add_argument("--no-figures", dest="figures", action="store_false", default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="croprow", description=__doc__.splitlines()[0])
    _config_flags(parser, None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _config_flags(p, argparse.SUPPRESS)
        p.set_defaults(func=func)
        return p

    p = add("segment", cmd_segment, "ExG/Otsu vegetation mask for RGB images")
    p.add_argument("images", nargs="+")

    p = add("overlay", cmd_overlay, "equal-weight blend of image and colorized mask")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("--taxonomy", default="AGRONAV8")

    p = add("lines", cmd_lines, "Hough boundary lines of a class mask")
    p.add_argument("mask")
    p.add_argument("--taxonomy", default="AGRONAV8")
    p.add_argument("--dump-acc", action="store_true", help="also write the accumulator grid")

    p = add("centerline", cmd_centerline, "centerline from a lines file")
    p.add_argument("lines")

    p = add("run", cmd_run, "full pipeline on RGB images or class masks")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--taxonomy", default="AGRONAV8", help="taxonomy of mask inputs")

    p = add("eval-seg", cmd_eval_seg, "mIoU of predicted masks against a manifest")
    p.add_argument("manifest")
    p.add_argument("--pred", required=True, help="directory of <id>.png / <id>.mask.png")
    p.add_argument("--classes", help="comma-separated class subset, e.g. soil,vegetation,sky")
    p.add_argument("--split", choices=("ground", "aerial"))

    p = add("eval-lines", cmd_eval_lines, "P/R/F of predicted lines against a manifest")
    p.add_argument("manifest")
    p.add_argument("--pred", required=True, help="directory of <id>.lines.txt / <id>.txt")
    p.add_argument("--split", choices=("ground", "aerial"))

    p = add("remap", cmd_remap, "relabel masks between taxonomies")
    p.add_argument("masks", nargs="+")
    p.add_argument("--source", default="CITYSCAPES19")
    p.add_argument("--target", default="AGRONAV8")
    p.add_argument("--table", help="'source -> target' table file (default: built-in)")

    p = add("synth", cmd_synth, "write a synthetic crop-row corpus")
    p.add_argument("-n", type=int, default=50)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--speckle", type=float, default=0.0)
    p.add_argument("--split", choices=("ground", "aerial"), default="ground")
    p.add_argument("--crop", default="synthetic")

    p = add("bench", cmd_bench, "frames-per-second of the in-memory pipeline")
    p.add_argument("--manifest")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distinct", type=int, default=8, help="distinct synthetic frames to cycle through")
    p.add_argument("--noise", type=float, default=0.1)
    return parser


_CONFIG_KEYS = ("jobs", "out", "threshold", "theta_bins", "r_step", "nms_r", "nms_theta", "k",
                "refine", "include_other", "fraction", "similarity_threshold", "figures")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
        cfg = load_config(args.config, overrides)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except (OSError, FormatError) as exc:
        return _fail(EXIT_IO, exc)
    except (CroprowError, ValueError) as exc:
        return _fail(EXIT_USAGE, exc)
    try:
        return args.func(args, cfg)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except Exception as exc:
        return _fail(_code_for(exc), f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
