import numpy as np
import pytest

from sbcpe.game import GameSpec

CRITERIA: list[str] = []


def g2_game() -> GameSpec:
    return GameSpec(
        n=2,
        action_counts=(2, 2),
        weights=[1.0, 1.0],
        thresholds=[0.2, 0.2],
        utilities=[[0.5, 0.3, 0.35, 0.1], [0.4, 0.3, 0.25, 0.25]],
    )


def gap_game() -> GameSpec:
    """Two agents, two actions, only (0,0) and (1,1) feasible, welfare gap 1.8."""
    return GameSpec(
        n=2,
        action_counts=(2, 2),
        weights=[1.0, 1.0],
        thresholds=[0.0, 0.0],
        utilities=[[0.95, 0.0, 0.5, 0.05], [0.95, 0.5, 0.0, 0.05]],
    )


@pytest.fixture
def g2():
    return g2_game()


@pytest.fixture
def gap():
    return gap_game()


def make_game(counts, utilities, weights=None, thresholds=None) -> GameSpec:
    n = len(counts)
    return GameSpec(
        n=n,
        action_counts=tuple(counts),
        weights=np.ones(n) if weights is None else weights,
        thresholds=np.full(n, 0.2) if thresholds is None else thresholds,
        utilities=utilities,
    )


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
