"""Shared fixtures and the per-criterion PASS/FAIL summary."""

from collections import defaultdict

import pytest

_CRITERIA = {}
_OUTCOMES = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    n = _CRITERIA.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES[n].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        outcomes = _OUTCOMES[n]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} checks)")
