import pytest

from skewvol.model import ModelParams


@pytest.fixture(scope="session")
def params():
    """The two-level model used throughout: 0.2 above the threshold, 0.9 below."""
    return ModelParams(0.2, 0.9)


@pytest.fixture(scope="session")
def flat():
    return ModelParams(0.3, 0.3)


# One summary line per acceptance criterion, filled in by tests/test_acceptance.py.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
