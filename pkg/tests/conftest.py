"""Shared pytest hooks: per-criterion pass/fail lines for the acceptance suite."""

import pytest

_results: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): tags a test as an acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num = marker.kwargs["num"]
    title = marker.kwargs["title"]
    prev_ok = _results.get(num, (True, title))[0]
    _results[num] = (prev_ok and rep.passed, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_results):
        ok, title = _results[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'} - {title}")
