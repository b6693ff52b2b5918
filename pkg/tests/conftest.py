import pytest


def pytest_configure(config):
    config._acceptance = []


@pytest.fixture
def criterion(request):
    """``criterion(name, passed, detail)`` records one acceptance line, shown
    in the terminal summary and on standard output."""
    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        request.config._acceptance.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if config._acceptance:
        terminalreporter.section("acceptance criteria")
        for line in config._acceptance:
            terminalreporter.write_line(line)
