import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(request):
    """Record one pass/fail line for an acceptance criterion and echo it live."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(number: int, ok: bool, detail: str) -> bool:
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
