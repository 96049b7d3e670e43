import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance_log():
    """Record one summary line per acceptance criterion."""

    def log(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_ACCEPTANCE[number])
        return ok

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
