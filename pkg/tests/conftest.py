import pytest

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_record():
    """Collects ``criterion -> (passed, detail)`` for the summary block."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
