import pytest

ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def record(label: str, ok: bool, detail: str) -> None:
        line = (label, bool(ok), detail)
        ACCEPTANCE.append(line)
        print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
