import pytest

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool, summary: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {summary}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record
