"""Collects acceptance outcomes and prints one line per criterion at the end."""

from __future__ import annotations

import pytest

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    slot = _criteria.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "tests": 0})
    slot["ok"] = slot["ok"] and rep.passed
    slot["seconds"] += rep.duration if rep.when == "call" else 0.0
    slot["tests"] += rep.when == "call"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        c = _criteria[number]
        status = "PASS" if c["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}  {status}  {c['seconds']:7.2f}s  {c['title']}")
