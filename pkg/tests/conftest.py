import pytest

_acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    prev = _acceptance.get(number, (title, False, False))
    done = prev[2] or report.when == "call"
    _acceptance[number] = (title, prev[1] or failed, done)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, failed, ran = _acceptance[number]
        verdict = "FAIL" if failed or not ran else "PASS"
        terminalreporter.write_line(f"AC{number:02d} {verdict}  {title}")
