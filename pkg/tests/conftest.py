import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary: one PASS/FAIL line per criterion at the end of the run
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    number = int(report.nodeid.split("test_criterion_")[1][:2])
    title = _CRITERIA.get(number, ("", ""))[0]
    if report.when == "call":
        _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL")
    elif report.failed:
        _CRITERIA[number] = (title, "FAIL")


def pytest_runtest_setup(item):
    if "test_criterion_" in item.name:
        number = int(item.name.split("test_criterion_")[1][:2])
        doc = (item.function.__doc__ or "").strip()
        _CRITERIA[number] = (doc, "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {outcome}  {title}")
