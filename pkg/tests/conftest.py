import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chaincodes import MetricSpace  # noqa: E402

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str = "") -> None:
    """Register one acceptance verdict for the terminal summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0].rstrip("."))):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def line3():
    return MetricSpace(("a", "b", "c"), np.array([[0, 0.5, 1.0], [0.5, 0, 0.5], [1.0, 0.5, 0]]))


@pytest.fixture
def pair():
    return MetricSpace(("a", "b"), np.array([[0, 1.0], [1.0, 0]]))
