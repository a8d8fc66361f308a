import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::(?:\w+::)?test_c(\d+)_(\w+?)(?:\[.*\])?$", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.failed or report.skipped:
        prev = _CRITERIA.get(key, "PASS")
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _CRITERIA[key] = outcome if prev == "PASS" else prev


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), outcome in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n:2d} {name.replace('_', ' ')}: {outcome}")
