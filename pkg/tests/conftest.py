import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

_CRITERIA: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture(scope="session")
def criterion_report():
    """``report(number, title, passed, detail)`` records one acceptance line."""

    def report(number: int, title: str, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), title, detail)
        print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}")
        return bool(passed)

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, detail = _CRITERIA[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
