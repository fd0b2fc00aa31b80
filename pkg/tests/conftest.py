import pytest

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_report():
    def report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
