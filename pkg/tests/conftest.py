"""Collects per-criterion outcomes from tests marked ``criterion`` and prints a verdict table."""
import pytest

_RANK = {"PASS": 0, "NOT REPRODUCIBLE": 1, "FAIL": 2}
_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    if report.skipped:
        status = "NOT REPRODUCIBLE"
    else:
        status = "PASS" if report.passed else "FAIL"
    entry = _results.setdefault(number, {"title": title, "status": "PASS", "tests": 0, "notes": []})
    if report.when == "call" or not report.passed:
        entry["tests"] += 1
    if _RANK[status] > _RANK[entry["status"]]:
        entry["status"] = status
    if report.skipped and isinstance(report.longrepr, tuple):
        entry["notes"].append(report.longrepr[2].removeprefix("Skipped: "))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        e = _results[number]
        line = f"criterion {number}: {e['status']:<16} {e['title']} ({e['tests']} checks)"
        terminalreporter.write_line(line)
        for note in e["notes"]:
            terminalreporter.write_line(f"    {note}")
