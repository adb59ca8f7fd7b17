import pytest

_CRITERIA: dict[int, str] = {}


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="slow; pass --run-slow to include")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def criterion():
    """Record a one-line verdict per acceptance criterion for the terminal summary."""

    def report(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_CRITERIA[number])
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 11):
        terminalreporter.write_line(_CRITERIA.get(number, f"criterion {number:>2}: SKIP  not run in this session"))
