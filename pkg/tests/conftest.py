from __future__ import annotations

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    entry = _RESULTS.setdefault(n, {"title": title, "passed": True, "seen": False})
    if rep.when == "call":
        entry["seen"] = True
    if rep.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        e = _RESULTS[n]
        verdict = "PASS" if e["passed"] and e["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {e['title']}")
