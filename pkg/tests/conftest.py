import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Recorder for the gate tests: one pass/fail line per criterion.

    The lines are replayed in the terminal summary so the verdict survives
    pytest's output capture.
    """

    def record(number: int, name: str, ok: bool, detail: str = "") -> bool:
        verdict = "PASS" if ok else "FAIL"
        line = f"criterion {number} [{verdict}] {name}"
        if detail:
            line += f" -- {detail}"
        request.config._acceptance_lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(getattr(config, "_acceptance_lines", []))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in lines:
        terminalreporter.write_line(line)
