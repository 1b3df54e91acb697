import pytest

_LINES = []


@pytest.fixture
def acceptance():
    """``acceptance(n, ok, detail)`` records one criterion verdict and asserts it.

    ``ok=None`` records an informational line without asserting.
    """

    def report(n, ok, detail):
        verdict = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {n:>2}: {verdict}  {detail}"
        _LINES.append(line)
        print(line)
        assert ok is None or ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: (int(s.split()[1].rstrip(":")), "INFO" in s)):
            terminalreporter.write_line(line)
