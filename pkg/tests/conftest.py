import re

import pytest

_CRITERIA = {}
_NOTES = {}


@pytest.fixture
def note(request):
    """Attach a measured summary to the acceptance line of the running criterion."""
    m = re.match(r"test_criterion_(\d+)", request.node.name)

    def add(text):
        if m:
            _NOTES.setdefault(int(m.group(1)), []).append(text)

    return add


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    failed = report.failed or (report.when == "call" and report.outcome != "passed")
    if report.when == "call" or failed:
        prev = _CRITERIA.get(key, (m.group(2), True))
        _CRITERIA[key] = (m.group(2), prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        name, ok = _CRITERIA[key]
        extra = "; ".join(_NOTES.get(key, []))
        line = f"criterion {key} {'PASS' if ok else 'FAIL'}  {name.replace('_', ' ')}"
        terminalreporter.write_line(line + (f"  [{extra}]" if extra else ""))
