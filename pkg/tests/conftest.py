import numpy as np
import pytest

from dpda.oracle import solve_centralized
from dpda.suites import random_qp_suite, random_resource_suite


@pytest.fixture(scope="session")
def qp42():
    probs = random_qp_suite(N=5, seed=42)
    return probs, solve_centralized(probs)


@pytest.fixture(scope="session")
def qp11_ball():
    probs = random_qp_suite(N=5, seed=11, ball=2.0)
    return probs, solve_centralized(probs)


@pytest.fixture(scope="session")
def res13():
    probs, slater = random_resource_suite(N=4, seed=13, return_slater=True)
    return probs, slater, solve_centralized(probs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
