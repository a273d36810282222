import pytest

from croprow.bench import FrameSource, run_bench, summarize
from croprow.config import PipelineConfig
from croprow.pipeline import STAGES

SMALL = FrameSource(size=64, count=2, seed=1)


def test_report_structure():
    rep = run_bench(SMALL, PipelineConfig(), frames=12, jobs=1)
    assert rep.frames == 12 and rep.failures == 0 and rep.fps > 0
    assert list(rep.stage_ms) == [*STAGES, "total"]
    assert sum(rep.stage_ms[s][0] for s in STAGES) <= rep.stage_ms["total"][0]


def test_pool_matches_structure():
    one = run_bench(SMALL, PipelineConfig(), frames=10, jobs=1)
    two = run_bench(SMALL, PipelineConfig(), frames=10, jobs=2)
    assert list(one.stage_ms) == list(two.stage_ms) and two.jobs == 2


def test_too_few_frames():
    with pytest.raises(ValueError):
        run_bench(SMALL, PipelineConfig(), frames=9)


def test_failures_counted():
    timings = [{"segment": 0.001, "total": 0.002}, {"segment": 0.001, "total": 0.003, "failed": 1.0}, None]
    rep = summarize(timings, 3, 1, 0.5)
    assert rep.failures == 2 and rep.fps == 6.0
    assert rep.stage_ms["total"][0] == pytest.approx(2.5)
    assert rep.format().splitlines()[-1] == "fps 6.00"
