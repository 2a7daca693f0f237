import pytest

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion: str, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    return passed



def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (len(k), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record_criterion():
    return record
