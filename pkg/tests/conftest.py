import pytest

_criteria: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): an acceptance criterion")


@pytest.fixture
def measured(request):
    """Dict the test fills with the numbers shown next to its criterion line."""
    values: dict = {}
    request.node._measured = values
    return values


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = ", ".join(f"{k}={v}" for k, v in getattr(item, "_measured", {}).items())
    _criteria.append(("PASS" if rep.passed else "FAIL", marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _criteria:
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
