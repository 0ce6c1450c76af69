import pytest

_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """record(number, ok, detail) -> ok; collected for the terminal summary."""
    lines = request.config.stash.setdefault(_KEY, [])

    def record(num, ok, detail=""):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda t: str(t[0])):
        terminalreporter.write_line(line)
