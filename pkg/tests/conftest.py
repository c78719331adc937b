import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record a criterion's outcome line; call with (number, passed, detail)."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _VERDICTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_VERDICTS[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
