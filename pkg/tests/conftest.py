"""Shared fixtures: tutorial tables and fixture-directory access."""

from pathlib import Path

import numpy as np
import pytest

from hibtask import CondTable, Dist, HibProblem, chain

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# conditional probability tables of the worked three-level example:
# four item labels over five observed elements, three mid-level groups,
# two top-level groups
P_OX = np.array(
    [
        [0.7, 0.6, 0.1, 0.1, 0.1],
        [0.1, 0.1, 0.1, 0.1, 0.6],
        [0.1, 0.2, 0.1, 0.1, 0.2],
        [0.1, 0.1, 0.7, 0.7, 0.1],
    ]
)
P_UO = np.array(
    [
        [0.8, 0.2, 0.1, 0.1],
        [0.1, 0.7, 0.1, 0.1],
        [0.1, 0.1, 0.8, 0.8],
    ]
)
P_TU = np.array(
    [
        [0.9, 0.1, 0.2],
        [0.1, 0.9, 0.8],
    ]
)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def tutorial_tables():
    ox = CondTable(P_OX, ("p", "q", "r", "s"), ("x1", "x2", "x3", "x4", "x5"))
    uo = CondTable(P_UO, ("A", "B", "C"), ("p", "q", "r", "s"))
    tu = CondTable(P_TU, ("Gamma", "Omega"), ("A", "B", "C"))
    return ox, uo, tu


@pytest.fixture
def tutorial_problem(tutorial_tables) -> HibProblem:
    ox, uo, tu = tutorial_tables
    ux = chain(uo, ox)
    tx = chain(tu, ux)
    return HibProblem(Dist.uniform(5, ox.col_labels), (ox, ux, tx))


def random_dist(rng, n: int) -> Dist:
    return Dist(rng.dirichlet(np.ones(n)))


def random_cond(rng, rows: int, cols: int) -> CondTable:
    return CondTable(rng.dirichlet(np.ones(rows), size=cols).T)


def random_problem(rng, max_dim: int = 8, max_levels: int = 3) -> HibProblem:
    n = int(rng.integers(1, max_levels + 1))
    m0 = int(rng.integers(2, max_dim + 1))
    conds = tuple(
        random_cond(rng, int(rng.integers(2, max_dim + 1)), m0) for _ in range(n)
    )
    return HibProblem(random_dist(rng, m0), conds)
