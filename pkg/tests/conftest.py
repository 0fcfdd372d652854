import pytest

# acceptance verdicts, filled in by tests/test_acceptance.py
VERDICTS: dict[int, tuple[str, str]] = {}
COLLECTED: set[int] = set()


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for a numbered acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> None:
        VERDICTS[number] = ("PASS" if ok else "FAIL", detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return record


def pytest_collection_finish(session):
    for item in session.items:
        if item.name.startswith("test_criterion_"):
            COLLECTED.add(int(item.name.split("_")[2]))


def pytest_terminal_summary(terminalreporter):
    if not COLLECTED:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(COLLECTED | set(VERDICTS)):
        status, detail = VERDICTS.get(number, ("FAIL", "(did not reach a verdict)"))
        terminalreporter.write_line(f"criterion {number:2d}: {status} {detail}")
