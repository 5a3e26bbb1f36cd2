import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion.

    Call ``acceptance(number, name, ok, detail)``; the line is printed in the
    terminal summary whatever the test outcome.
    """

    def record(number, name, ok, detail=""):
        _ACCEPTANCE.append((number, name, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if ok else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"[{status}] {number}. {name}{suffix}")
