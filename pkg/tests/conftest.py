import pytest

# acceptance outcomes, filled by tests/test_acceptance.py
CRITERIA: dict[int, tuple[str, bool, str]] = {}


def record(number: int, name: str, passed: bool, detail: str) -> None:
    CRITERIA[number] = (name, bool(passed), detail)
    print(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}", flush=True)


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        name, passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"{number}. {'PASS' if passed else 'FAIL'}  {name}: {detail}")
