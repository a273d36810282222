"""Figures written next to the text reports."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import Centerline, ImageDims, line_to_border_segment  # noqa: E402

# fixed metadata keeps reruns byte-identical
_META = {"Software": None}

plt.rcParams.update({
    "font.size": 8,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
})


def _save(fig, path) -> None:
    fig.savefig(Path(path), dpi=100, metadata=_META)
    plt.close(fig)


def plot_frame(image: np.ndarray, blended: np.ndarray, lines, cl: Centerline | None,
               dims: ImageDims, path, title: str = "") -> None:
    """Input next to the overlay with boundary lines and centerline drawn on top."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 4))
    axes[0].imshow(image)
    axes[0].set_title("input")
    axes[1].imshow(blended)
    axes[1].set_title(title or "overlay + lines")
    for det, color in zip(lines, ("tab:orange", "tab:cyan", "white", "white")):
        seg = line_to_border_segment(det.line, dims)
        axes[1].plot([seg.p0[0], seg.p1[0]], [seg.p0[1], seg.p1[1]], color=color, lw=1.5)
    if cl is not None:
        axes[1].plot(cl.xs, cl.rows, color="yellow", lw=2)
    for ax in axes:
        ax.set_xlim(-0.5, dims.width - 0.5)
        ax.set_ylim(dims.height - 0.5, -0.5)
        ax.axis("off")
    fig.tight_layout()
    _save(fig, path)


def plot_prf(summary: Mapping, path) -> None:
    groups = list(summary)
    vals = np.array([[summary[g].precision, summary[g].recall, summary[g].f_measure] for g in groups])
    x = np.arange(len(groups))
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(groups), 3))
    for k, (name, color) in enumerate(zip(("precision", "recall", "F"), ("#4c72b0", "#55a868", "#c44e52"))):
        ax.bar(x + (k - 1) * 0.25, vals[:, k], width=0.25, label=name, color=color)
    ax.set_xticks(x)
    ax.set_xticklabels(groups)
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right", fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_iou(sections: Mapping, path) -> None:
    """Per-class IoU bars, one group of bars per report section."""
    names = list(sections)
    labels = [c.label for c in next(iter(sections.values())).per_class]
    fig, ax = plt.subplots(figsize=(1.5 + 0.6 * len(labels) * max(1, len(names)) / 2, 3))
    width = 0.8 / len(names)
    x = np.arange(len(labels))
    for k, name in enumerate(names):
        ious = [c.iou if c.iou is not None else 0.0 for c in sections[name].per_class]
        ax.bar(x + k * width - 0.4 + width / 2, ious, width=width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("IoU")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_bench(stage_ms: Mapping[str, tuple[float, float]], fps: float, path) -> None:
    stages = [s for s in stage_ms if s != "total"]
    mean = [stage_ms[s][0] for s in stages]
    p95 = [stage_ms[s][1] for s in stages]
    fig, ax = plt.subplots(figsize=(5, 3))
    y = np.arange(len(stages))
    ax.barh(y, p95, color="#cccccc", label="p95")
    ax.barh(y, mean, color="#4c72b0", height=0.5, label="mean")
    ax.set_yticks(y)
    ax.set_yticklabels(stages)
    ax.invert_yaxis()
    ax.set_xlabel("ms per frame")
    ax.set_title(f"{fps:.2f} FPS")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
