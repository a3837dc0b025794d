"""Per-criterion pass/fail summary for the acceptance module."""

from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _TITLES[number] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _RESULTS[number].append((item.name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        checks = _RESULTS[number]
        ok = sum(passed for _, passed in checks)
        status = "PASS" if ok == len(checks) else "FAIL"
        line = f"criterion {number}: {status}  {_TITLES[number]} ({ok}/{len(checks)} checks)"
        failed = [name for name, passed in checks if not passed]
        if failed:
            line += "  failing: " + ", ".join(failed)
        terminalreporter.write_line(line)
