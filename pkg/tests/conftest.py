import numpy as np
import pytest


@pytest.fixture
def rng():
    # test-only randomness for probe points; the library never uses numpy's global state
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config._acceptance_lines

    def report(number, title, ok, detail):
        lines.append((number, f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} -- {detail}"))
        print(lines[-1][1])
        assert ok, detail

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
