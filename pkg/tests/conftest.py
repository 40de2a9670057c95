import pytest

_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Print a result line immediately and again in the session summary."""

    def emit(line: str):
        _LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in _LINES:
            terminalreporter.write_line(line)
