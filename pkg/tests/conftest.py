from pathlib import Path

import pytest
from gmpy2 import mpq

from bfpd.model import DivisibleInstance, KLevelInstance, PiecewiseLinearConcave, Regime

DATA = Path(__file__).parent / "data"


def two_agent_all_in() -> KLevelInstance:
    """Agent 0 has marginals (4, 2), agent 1 (3, 1); unit costs, budget 5/2."""
    return KLevelInstance.build([1, 1], [[4, 2], [3, 1]], mpq(5, 2), Regime.ALL_IN)


def symmetric(n: int = 5, budget: int = 4) -> KLevelInstance:
    return KLevelInstance.build([1] * n, [[1]] * n, budget, Regime.ALL_IN)


def best_in_pair() -> KLevelInstance:
    return KLevelInstance.build([mpq(9, 10), mpq(1, 10)], [[5, 2], [1, 1]], 1, Regime.BEST_IN)


def tight(eps) -> DivisibleInstance:
    return DivisibleInstance.linear([eps, 1 - eps], [1, 1], 1)


def three_linear() -> DivisibleInstance:
    return DivisibleInstance.linear([1, 1, 4], [4, 3, 2], 4)


def singleton_linear() -> DivisibleInstance:
    return DivisibleInstance.linear([1], [5], 2)


def piecewise(points) -> PiecewiseLinearConcave:
    return PiecewiseLinearConcave.from_points(points)


@pytest.fixture
def data_dir() -> Path:
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
