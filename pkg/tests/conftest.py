from __future__ import annotations

import os

import numpy as np
import pytest

from fsqd.mps import MPO

SLOW = os.environ.get("FSQD_SLOW", "") not in ("", "0")


_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _CRITERIA.setdefault(number, {"title": title, "failed": [], "ran": 0})
    if SLOW:
        return
    skip = pytest.mark.skip(reason="slow reproduction suite; set FSQD_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _CRITERIA[mark.args[0]]
    if report.failed:
        entry["failed"].append(item.name)
    elif report.when == "call" and report.passed:
        entry["ran"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        if entry["failed"]:
            status = "FAIL"
        elif entry["ran"]:
            status = "PASS"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {entry['title']}")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def site_operator_mpo(n: int, site: int, op: np.ndarray) -> MPO:
    """Bond-1 MPO for ``op`` acting on one site."""
    eye = np.eye(2, dtype=complex)
    return MPO([(op if k == site else eye).reshape(1, 2, 2, 1) for k in range(n)], hermitian=True)
