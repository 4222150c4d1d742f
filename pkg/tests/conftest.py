import pytest

_criteria: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, printed at the end of the run."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _criteria[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(_criteria[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_criteria):
            terminalreporter.write_line(_criteria[n])
