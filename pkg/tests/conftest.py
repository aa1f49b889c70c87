import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dyadic_hardy import PExponent, build_instance  # noqa: E402

P_GRID = (1.25, 1.5, 2.0, 3.0, 4.0)


@pytest.fixture
def three_node():
    lam = np.array([1.0, 0.5, 0.5])
    return build_instance(1, [0.1, 0.1, 0.1], lam, np.sqrt(lam))


@pytest.fixture
def p2():
    return PExponent(2.0)


@pytest.fixture(params=P_GRID, ids=lambda p: f"p={p}")
def exp(request):
    return PExponent(request.param)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
