"""Line similarity, bipartite matching of predictions to ground truth, and
precision / recall / F-measure bookkeeping."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .geometry import ImageDims, SemanticLine, line_to_border_segment

DEFAULT_THRESHOLD = 0.9


@dataclass(frozen=True)
class SimilarityParams:
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"similarity threshold must lie in (0, 1], got {self.threshold}")


@dataclass(frozen=True)
class SimilarityTerms:
    angular: float
    euclidean: float

    @property
    def score(self) -> float:
        return (self.angular * self.euclidean) ** 2


def acute_angle(a: SemanticLine, b: SemanticLine) -> float:
    d = abs(a.theta - b.theta) % math.pi
    return min(d, math.pi - d)


def similarity_terms(a: SemanticLine, b: SemanticLine, dims: ImageDims) -> SimilarityTerms:
    ma = line_to_border_segment(a, dims).midpoint()
    mb = line_to_border_segment(b, dims).midpoint()
    d = math.hypot(ma[0] - mb[0], ma[1] - mb[1])
    s_a = max(0.0, 1.0 - acute_angle(a, b) / (math.pi / 2))
    s_e = max(0.0, 1.0 - d / dims.diagonal)
    return SimilarityTerms(s_a, s_e)


def line_similarity(a: SemanticLine, b: SemanticLine, dims: ImageDims) -> float:
    """``(S_angle * S_dist) ** 2``; both terms fall linearly from 1 to 0.

    ``S_angle`` uses the acute angle against a right angle, ``S_dist`` the
    distance between the midpoints of the clipped segments against the image
    diagonal. Raises ``NoIntersectionError`` for lines that miss the image.
    """
    return similarity_terms(a, b, dims).score


# ---------------------------------------------------------------- matching

def max_matching(weights: Sequence[Sequence[float]], threshold: float) -> list[tuple[int, int, float]]:
    """Maximum-cardinality matching on edges with ``weight >= threshold``; among
    those, one of maximum total weight.

    Successive shortest augmenting paths (Bellman-Ford on the residual graph,
    cost = -weight). Every augmentation grows the matching by one edge while
    keeping it weight-optimal for its size, so the loop ends at the heaviest
    maximum-cardinality matching. Returns ``(row, col, weight)`` sorted by row.
    """
    n = len(weights)
    m = len(weights[0]) if n else 0
    adj = [[(j, float(weights[i][j])) for j in range(m) if weights[i][j] >= threshold]
           for i in range(n)]
    match_l: list[int | None] = [None] * n
    match_r: list[int | None] = [None] * m

    while True:
        # nodes: 0..n-1 left, n..n+m-1 right; distances from a virtual source
        # connected to every free left node at cost 0
        dist = [math.inf] * (n + m)
        prev = [-1] * (n + m)
        for i in range(n):
            if match_l[i] is None:
                dist[i] = 0.0
        for _ in range(n + m):
            changed = False
            for i in range(n):
                if dist[i] == math.inf:
                    continue
                for j, w in adj[i]:
                    if match_l[i] == j:
                        continue
                    nd = dist[i] - w
                    if nd < dist[n + j]:
                        dist[n + j], prev[n + j] = nd, i
                        changed = True
            for j in range(m):
                i = match_r[j]
                if i is None or dist[n + j] == math.inf:
                    continue
                nd = dist[n + j] + _weight(adj[i], j)
                if nd < dist[i]:
                    dist[i], prev[i] = nd, n + j
                    changed = True
            if not changed:
                break
        best = None
        for j in range(m):
            if match_r[j] is None and dist[n + j] < math.inf:
                if best is None or dist[n + j] < dist[n + best]:
                    best = j
        if best is None:
            break
        # flip the path back to its free left endpoint
        j = best
        while True:
            i = prev[n + j]
            old = match_l[i]
            match_l[i], match_r[j] = j, i
            if old is None:
                break
            j = old
    return [(i, j, _weight(adj[i], j)) for i, j in enumerate(match_l) if j is not None]


def _weight(edges: list[tuple[int, float]], j: int) -> float:
    for jj, w in edges:
        if jj == j:
            return w
    raise KeyError(j)


@dataclass(frozen=True)
class LineMatchReport:
    pairs: tuple[tuple[int, int, float], ...]
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, pairs=()) -> "LineMatchReport":
        return cls(tuple(pairs), tp, fp, fn)

    @property
    def precision(self) -> float:
        return precision(self.tp, self.fp)

    @property
    def recall(self) -> float:
        return recall(self.tp, self.fn)

    @property
    def f_measure(self) -> float:
        return f_measure(self.precision, self.recall)

    def __add__(self, other: "LineMatchReport") -> "LineMatchReport":
        return LineMatchReport((), self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def precision(tp: int, fp: int) -> float:
    # no predictions: nothing was wrong
    return tp / (tp + fp) if tp + fp else 1.0


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn else 1.0


def f_measure(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def match_lines(preds: Sequence[SemanticLine], gts: Sequence[SemanticLine], dims: ImageDims,
                params: SimilarityParams = SimilarityParams()) -> LineMatchReport:
    sims = [[line_similarity(p, g, dims) for g in gts] for p in preds]
    pairs = max_matching(sims, params.threshold) if preds and gts else []
    tp = len(pairs)
    return LineMatchReport(tuple(pairs), tp, len(preds) - tp, len(gts) - tp)


# ---------------------------------------------------------------- aggregation

@dataclass(frozen=True)
class PRF:
    group: str
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return precision(self.tp, self.fp)

    @property
    def recall(self) -> float:
        return recall(self.tp, self.fn)

    @property
    def f_measure(self) -> float:
        return f_measure(self.precision, self.recall)

    def format(self) -> str:
        return f"{self.group} {self.precision:.4f} {self.recall:.4f} {self.f_measure:.4f}"


OVERALL = "overall"


def aggregate(reports: Sequence[LineMatchReport], groups: Sequence[str] | None = None) -> "OrderedDict[str, PRF]":
    """Micro-averaged P/R/F per group (first-seen order) plus an ``overall`` row."""
    if not reports:
        raise ValueError("nothing to aggregate")
    groups = list(groups) if groups is not None else [OVERALL] * len(reports)
    if len(groups) != len(reports):
        raise ValueError("one group tag per report required")
    sums: "OrderedDict[str, list[int]]" = OrderedDict()
    for rep, g in zip(reports, groups):
        acc = sums.setdefault(g, [0, 0, 0])
        acc[0] += rep.tp
        acc[1] += rep.fp
        acc[2] += rep.fn
    out: "OrderedDict[str, PRF]" = OrderedDict((g, PRF(g, *c)) for g, c in sums.items())
    out[OVERALL] = PRF(OVERALL, sum(r.tp for r in reports), sum(r.fp for r in reports),
                       sum(r.fn for r in reports))
    return out


def format_line_report(rows: Iterable[tuple[str, str, LineMatchReport]],
                       summary: Mapping[str, PRF]) -> str:
    out = ["# image_id group tp fp fn"]
    out.extend(f"{iid} {grp} {rep.tp} {rep.fp} {rep.fn}" for iid, grp, rep in rows)
    out.append("# group P R F")
    out.extend(prf.format() for prf in summary.values())
    return "\n".join(out) + "\n"
