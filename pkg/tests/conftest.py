"""Shared fixtures and the acceptance-criteria summary.

Tests marked ``@pytest.mark.criterion(n)`` report a verdict through the
``verdict`` fixture; one PASS/FAIL line per criterion is printed at the
end of the session, including criteria whose test raised before reporting.
"""

import pytest

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.fixture
def verdict(request):
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else request.node.name

    def record(checks, details=""):
        ok = all(checks.values())
        failed = [name for name, passed in checks.items() if not passed]
        _VERDICTS[number] = (ok, details if ok else f"failed: {', '.join(failed)}; {details}")
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {details}")
        assert ok, f"criterion {number} failed checks {failed}; {details}"

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and rep.when == "call" and rep.failed and marker.args[0] not in _VERDICTS:
        _VERDICTS[marker.args[0]] = (False, f"raised {call.excinfo.typename}: "
                                            f"{call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_VERDICTS):
        ok, details = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  "
                                    f"{details}")
