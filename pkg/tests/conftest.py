import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.skipped or report.failed:
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
            _CRITERIA[key] = f"SKIP  ({reason.removeprefix('Skipped: ')})"
        else:
            _CRITERIA.setdefault(key, "PASS" if report.passed else "FAIL")
            if report.failed:
                _CRITERIA[key] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), verdict in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n:2d} {name.replace('_', ' '):<32} {verdict}")
