import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from croprow.errors import DetectionFailure, FormatError
from croprow.geometry import ImageDims, SemanticLine, endpoints_to_line, rasterize_line, x_at_row
from croprow.linedetect import (
    BoundaryMap,
    DetectedLine,
    boundary_map,
    detect_boundaries,
    detect_lines,
    format_lines,
    hough,
    parse_lines,
)
from croprow.segmentation import AGRONAV8, ClassMask
from croprow.synthfield import FieldSpec, perspective_lane, render
from conftest import angle_diff
from oracles import argmax_lowest, brute_hough

SOIL, VEG = AGRONAV8.id("soil"), AGRONAV8.id("vegetation")
BIN = math.pi / 180


def painted(lines, dims):
    w = np.zeros((dims.height, dims.width))
    for line in lines:
        for x, y in rasterize_line(line, dims):
            w[y, x] = 1.0
    return BoundaryMap(w)


def lane_mask(x0, x1, dims):
    data = np.full((dims.height, dims.width), VEG, np.uint8)
    data[:, x0:x1 + 1] = SOIL
    return ClassMask(data)


def vertical(x, dims):
    return endpoints_to_line((x, 0), (x, dims.height - 1), dims)


def close(line, truth, r_tol=1.0, t_tol=BIN):
    """Compare two lines allowing for the (r, theta) ~ (-r, theta - pi) wrap."""
    d = angle_diff(line.theta, truth.theta)
    wrapped = abs(line.theta - truth.theta) > math.pi / 2
    r = -line.r if wrapped else line.r
    return d <= t_tol and abs(r - truth.r) <= r_tol


class TestBoundaryMap:
    def test_vertical_split(self):
        data = np.full((5, 8), SOIL, np.uint8)
        data[:, :3] = VEG
        w = boundary_map(ClassMask(data)).weights
        assert np.flatnonzero(w.any(axis=0)).tolist() == [2, 3]
        assert w[:, 2:4].all()

    def test_all_soil(self):
        assert not boundary_map(ClassMask(np.zeros((6, 6), np.uint8))).weights.any()

    def test_checkerboard(self):
        yy, xx = np.mgrid[:6, :7]
        data = np.where((xx + yy) % 2, VEG, SOIL).astype(np.uint8)
        assert boundary_map(ClassMask(data)).weights.all()

    def test_other_classes_ignored_unless_flagged(self):
        data = np.full((4, 6), SOIL, np.uint8)
        data[:, :3] = AGRONAV8.id("sky")
        m = ClassMask(data)
        assert not boundary_map(m).weights.any()
        assert boundary_map(m, include_other=True).weights[:, 2:4].all()

    def test_matches_neighborhood_enumeration(self, rng):
        data = rng.choice([SOIL, VEG, 2], size=(9, 11)).astype(np.uint8)
        w = boundary_map(ClassMask(data)).weights
        h, wd = data.shape
        for y in range(h):
            for x in range(wd):
                hood = {data[y, x]}
                for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                    if 0 <= y + dy < h and 0 <= x + dx < wd:
                        hood.add(data[y + dy, x + dx])
                assert w[y, x] == float(SOIL in hood and VEG in hood)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            BoundaryMap(np.array([[0.0, -1.0]]))


class TestHough:
    def test_layout(self, dims100):
        acc = hough(BoundaryMap(np.zeros((100, 100))))
        assert acc.votes.shape == (142, 180)
        assert acc.r_max >= acc.diagonal / 2
        assert acc.theta_center(0) == pytest.approx(BIN / 2)
        assert not acc.votes.any()

    def test_center_pixel_votes_r_zero(self):
        w = np.zeros((9, 9))
        w[4, 4] = 1
        acc = hough(BoundaryMap(w), theta_bins=36)
        rows = np.flatnonzero(acc.votes.sum(axis=1))
        assert len(rows) == 1
        lo, hi = acc.r_center(rows[0]) - 0.5, acc.r_center(rows[0]) + 0.5
        assert lo <= 0.0 < hi
        assert acc.votes[rows[0]].tolist() == [1.0] * 36

    def test_matches_brute_force(self, rng):
        w = (rng.random((12, 15)) < 0.2) * rng.integers(1, 4, (12, 15))
        acc = hough(BoundaryMap(w.astype(float)), theta_bins=24, r_step=1.5)
        votes, half = brute_hough(w.tolist(), 24, 1.5)
        assert acc.r_max == half
        assert np.array_equal(acc.votes, np.array(votes))

    def test_vertical_line_peak(self, dims100):
        acc = hough(painted([vertical(70, dims100)], dims100))
        (i, j), _ = argmax_lowest(acc.votes.tolist())
        assert abs(acc.r_center(i) - 20.5) <= 1.0
        assert abs(acc.theta_center(j) - math.pi / 2) <= BIN

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.int64, (7, 9), elements=st.integers(0, 5)), st.integers(1, 40))
    def test_vote_conservation(self, w, bins):
        acc = hough(BoundaryMap(w.astype(float)), theta_bins=bins)
        assert acc.votes.sum() == w.sum() * bins

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (6, 8), elements=st.floats(0, 3)), st.floats(0.25, 8))
    def test_weight_scaling(self, w, c):
        a = hough(BoundaryMap(w), theta_bins=30)
        b = hough(BoundaryMap(w * c), theta_bins=30)
        assert np.allclose(b.votes, a.votes * c, rtol=1e-9, atol=1e-12)
        if a.votes.max() > 0:
            top_a = np.isclose(a.votes, a.votes.max(), rtol=1e-9)
            top_b = np.isclose(b.votes, b.votes.max(), rtol=1e-9)
            assert np.array_equal(top_a, top_b)

    def test_dump_header(self):
        acc = hough(BoundaryMap(np.ones((3, 4))), theta_bins=4)
        lines = acc.dump().splitlines()
        fields = lines[0].split()
        assert len(fields) == 5 and fields[:2] == [str(acc.r_bins), "4"]
        assert len(lines) == 1 + acc.r_bins
        back = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
        assert np.array_equal(back, acc.votes)


class TestDetectLines:
    def test_two_verticals(self, dims100):
        acc = hough(painted([vertical(20, dims100), vertical(60, dims100)], dims100))
        peaks = detect_lines(acc)
        assert not peaks.short and len(peaks.lines) == 2
        truths = [SemanticLine(-29.5, math.pi / 2), SemanticLine(10.5, math.pi / 2)]
        found = sorted(peaks.lines, key=lambda d: d.line.r)
        for d, t in zip(found, truths):
            assert close(d.line, t)

    def test_empty(self):
        peaks = detect_lines(hough(BoundaryMap(np.zeros((10, 10)))))
        assert peaks.lines == [] and peaks.short

    def test_single_line_first_is_true(self, dims100):
        truth = endpoints_to_line((10, 99), (80, 0), dims100)
        peaks = detect_lines(hough(painted([truth], dims100)))
        assert close(peaks.lines[0].line, truth)
        assert len(peaks.lines) == 1 or peaks.lines[1].score < peaks.lines[0].score

    def test_scores_descending_and_positive(self, rng, dims100):
        w = (rng.random((100, 100)) < 0.05).astype(float)
        peaks = detect_lines(hough(BoundaryMap(w)), k=6)
        scores = [d.score for d in peaks.lines]
        assert scores == sorted(scores, reverse=True) and min(scores) > 0

    def test_nms_separation(self, rng):
        w = (rng.random((60, 60)) < 0.1).astype(float)
        acc = hough(BoundaryMap(w))
        peaks = detect_lines(acc, k=8, nms_r=4, nms_theta=5, refine=False)
        nt, nr = acc.theta_bins, acc.r_bins
        for a in range(len(peaks.bins)):
            for b in range(a):
                (i1, j1), (i2, j2) = peaks.bins[a], peaks.bins[b]
                dj = abs(j1 - j2)
                direct = abs(i1 - i2) > 4 or dj > 5
                wrapped = abs(i1 - (nr - 1 - i2)) > 4 or nt - dj > 5
                assert direct and wrapped

    def test_wrap_suppresses_mirrored_bins(self):
        # a nearly horizontal line votes near theta = 0 and near theta = pi
        dims = ImageDims(80, 80)
        truth = SemanticLine(7.0, 0.002)
        peaks = detect_lines(hough(painted([truth], dims)), k=2)
        assert close(peaks.lines[0].line, truth)
        if len(peaks.lines) == 2:
            assert not close(peaks.lines[1].line, truth, r_tol=3, t_tol=3 * BIN)

    def test_deterministic(self, rng):
        w = (rng.random((50, 70)) < 0.1).astype(float)
        runs = [detect_lines(hough(BoundaryMap(w.copy())), k=4) for _ in range(3)]
        assert runs[0] == runs[1] == runs[2]

    def test_tie_breaks_to_lowest_index(self):
        w = np.zeros((20, 20))
        w[3, 3] = w[16, 16] = 1.0
        acc = hough(BoundaryMap(w), theta_bins=16)
        peaks = detect_lines(acc, k=1, refine=False)
        flat = np.flatnonzero(acc.votes == acc.votes.max())[0]
        assert peaks.bins[0] == divmod(int(flat), 16)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            detect_lines(hough(BoundaryMap(np.ones((3, 3)))), k=0)


class TestDetectBoundaries:
    def test_lane_columns(self, dims100):
        left, right = detect_boundaries(lane_mask(30, 70, dims100))
        for y in range(100):
            assert abs(x_at_row(left.line, y, dims100) - 29.5) <= 2
            assert abs(x_at_row(right.line, y, dims100) - 70.5) <= 2

    def test_all_soil_fails(self):
        with pytest.raises(DetectionFailure) as info:
            detect_boundaries(ClassMask(np.zeros((40, 40), np.uint8)))
        assert info.value.partial == []

    def test_perspective_lane(self):
        dims = ImageDims(100, 100)
        left, right = perspective_lane(dims, 25, 75, slope=0.5)
        scene = render(FieldSpec(dims, left, right))
        got_l, got_r = detect_boundaries(scene.mask)
        r_bin = 1.0
        assert close(got_l.line, left, r_tol=r_bin, t_tol=BIN)
        assert close(got_r.line, right, r_tol=r_bin, t_tol=BIN)

    def test_mirror_equivariance(self):
        dims = ImageDims(120, 90)
        left, right = perspective_lane(dims, 20, 90, slope=0.4)
        mask = render(FieldSpec(dims, left, right)).mask
        flipped = ClassMask(mask.data[:, ::-1])
        a = detect_boundaries(mask)
        b = detect_boundaries(flipped)
        # mirroring swaps left and right
        for orig, mir in ((a[0], b[1]), (a[1], b[0])):
            expect = SemanticLine(-orig.line.r, math.pi - orig.line.theta)
            assert close(mir.line, expect, r_tol=1.0, t_tol=BIN)


class TestSerialization:
    def test_round_trip(self):
        dims = ImageDims(64, 48)
        lines = [DetectedLine(SemanticLine(-3.25, 1.5), 10.0), DetectedLine(SemanticLine(7.0, 0.5), 42.5)]
        text = format_lines(lines, dims)
        assert text.splitlines() == [
            "# lines w=64 h=48",
            "7.000000 0.500000 42.500000",
            "-3.250000 1.500000 10.000000",
        ]
        back, d = parse_lines(text)
        assert d == dims and [x.score for x in back] == [42.5, 10.0]

    def test_comment_rows_skipped(self):
        back, _ = parse_lines("# lines w=4 h=4\n# note\n1 1 1\n")
        assert len(back) == 1

    def test_errors(self):
        with pytest.raises(FormatError):
            parse_lines("")
        with pytest.raises(FormatError):
            parse_lines("# lines w=4 h=4\n1 2\n")
        with pytest.raises(FormatError):
            parse_lines("# centerline w=4 h=4\n1 2 3\n")


def test_support_refit_within_one_bin(rng):
    dims = ImageDims(64, 64)
    worst = 0.0
    for _ in range(200):
        t0, t1 = rng.random(2) * 63
        truth = endpoints_to_line((t0, 0), (t1, 63), dims) if rng.random() < 0.5 \
            else endpoints_to_line((0, t0), (63, t1), dims)
        bmap = painted([truth], dims)
        acc = hough(bmap)
        plain = detect_lines(acc, k=1).lines[0].line
        fitted = detect_lines(acc, k=1, support=bmap).lines[0].line
        assert detect_lines(acc, k=1, support=bmap).bins == detect_lines(acc, k=1).bins
        assert close(fitted, truth)
        worst = max(worst, angle_diff(plain.theta, truth.theta) / BIN)
    # the accumulator alone cannot do this
    assert worst > 1.0
