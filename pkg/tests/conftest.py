"""Collects outcomes of tests marked ``criterion`` and prints one line per criterion."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed or (report.when == "setup" and report.skipped):
        prev = _RESULTS.get(number)
        status = "FAIL" if failed else ("SKIP" if report.skipped else "PASS")
        if prev is None or prev[0] == "PASS":
            _RESULTS[number] = (status, title, getattr(report, "duration", 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, duration = _RESULTS[number]
        terminalreporter.write_line(f"{status}  criterion {number}: {title} ({duration:.2f} s)")
