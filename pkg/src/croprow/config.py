"""Pipeline settings, loadable from a ``key = value`` text file."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import FormatError


@dataclass(frozen=True)
class PipelineConfig:
    threshold: str = "auto"          # "auto" (Otsu on ExG) or an integer
    theta_bins: int = 180
    r_step: float = 1.0
    nms_r: int = 10
    nms_theta: int = 10
    k: int = 2
    refine: bool = True
    include_other: bool = False
    fraction: float = 1 / 3
    similarity_threshold: float = 0.9
    taxonomy: str = "AGRONAV8"
    out: str = "out"
    jobs: int = 0                    # 0: one worker per hardware thread
    figures: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.threshold != "auto":
            try:
                int(self.threshold)
            except (TypeError, ValueError):
                raise ValueError(f"threshold must be 'auto' or an integer, got {self.threshold!r}") from None
        if self.theta_bins < 1:
            raise ValueError("theta_bins must be >= 1")
        if not self.r_step > 0:
            raise ValueError("r_step must be > 0")
        if self.nms_r < 0 or self.nms_theta < 0:
            raise ValueError("nms windows must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if not 0 < self.similarity_threshold <= 1:
            raise ValueError("similarity_threshold must lie in (0, 1]")
        if self.jobs < 0:
            raise ValueError("jobs must be >= 0")

    @property
    def seg_threshold(self) -> int | str:
        return "auto" if self.threshold == "auto" else int(self.threshold)

    @property
    def workers(self) -> int:
        return self.jobs or os.cpu_count() or 1

    def updated(self, values: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name: f for f in fields(self)}
        clean = {}
        for key, val in values.items():
            if val is None:
                continue
            if key not in known:
                raise FormatError(f"unknown config key {key!r}")
            clean[key] = _coerce(known[key].type, val, key)
        return replace(self, **clean)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_render(getattr(self, f.name))}\n" for f in fields(self))


def _render(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(kind: str, val: Any, key: str) -> Any:
    if not isinstance(val, str):
        return val
    try:
        if kind == "bool":
            low = val.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
        if kind == "int":
            return int(val)
        if kind == "float":
            if "/" in val:
                num, den = val.split("/")
                return float(num) / float(den)
            return float(val)
    except ValueError:
        raise FormatError(f"bad value {val!r} for {key}") from None
    return val.strip()


def parse_config(text: str) -> dict[str, str]:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        key, eq, val = line.partition("=")
        if not eq:
            raise FormatError(f"config line {n}: expected 'key = value', got {raw!r}")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Defaults, then the file, then explicit overrides (command-line flags)."""
    cfg = PipelineConfig()
    if path is not None:
        cfg = cfg.updated(parse_config(Path(path).read_text()))
    if overrides:
        cfg = cfg.updated(overrides)
    return cfg
