import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {}
EMITTED = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        if marker is not None and report.when == "setup" and report.failed:
            CRITERIA.setdefault(marker.args[0], []).append((item.name, "FAIL", 0.0))
        return
    status = "PASS" if report.passed else "FAIL"
    CRITERIA.setdefault(marker.args[0], []).append((item.name, status, report.duration))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        runs = CRITERIA[n]
        status = "PASS" if all(s == "PASS" for _, s, _ in runs) else "FAIL"
        secs = sum(d for _, _, d in runs)
        names = ", ".join(name for name, _, _ in runs)
        terminalreporter.write_line(f"criterion {n:>2}: {status}  ({secs:6.1f} s)  {names}")
    for line in EMITTED:
        terminalreporter.write_line(line)
