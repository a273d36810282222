import math

import numpy as np
import pytest

from croprow.geometry import ImageDims


@pytest.fixture
def dims100():
    return ImageDims(100, 100)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def angle_diff(a, b):
    """Distance between two line angles on the circle of period pi."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


# acceptance criteria: one summary line each at the end of the run
_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    if rep.when == "call" or rep.failed:
        _CRITERIA[mark.args[0]] = (mark.args[1], status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} {status}: {title}" + (f" ({detail})" if detail else ""))
