import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record(label: str, ok: bool, detail: str = ""):
    """Log one acceptance line; it is echoed in the terminal summary."""
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else ""))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def two_qubit_run():
    """Two-spin study with defaults and its wall time (shared, ~10 s)."""
    import time

    from qsense.optimizeng import two_qubit_study

    start = time.perf_counter()
    rep = two_qubit_study()
    return rep, time.perf_counter() - start
