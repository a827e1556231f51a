import pytest

ACCEPTANCE = {}


@pytest.fixture
def notes(request):
    """Detail lines attached to the criterion's PASS/FAIL line."""
    lines = []
    request.node.acceptance_notes = lines
    return lines


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    ACCEPTANCE[number] = (title, "PASS" if report.passed else "FAIL", getattr(item, "acceptance_notes", []))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, status, lines = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}: {title}")
        for line in lines:
            terminalreporter.write_line(f"    {line}")
