import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """Store a PASS/FAIL line for the acceptance summary."""
    def _record(k: int, passed: bool, detail: str):
        line = f"ACCEPTANCE {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[k] = line
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
