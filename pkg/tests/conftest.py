import numpy as np
import pytest

from cito import dynamics, tasks
from cito.trajopt import LinearPlant, Problem, QuadraticCost

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def world():
    return dynamics.World(robot=dynamics.RobotModel(base=[0.5, 0.0]))


@pytest.fixture
def planar_cfg():
    return tasks.resolve(task="1a")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def linear_problem(n_steps=5, seed=0, x_goal=None, wu=1e-2, bounds=1e6):
    """Small controllable linear plant with a terminal target."""
    rng = np.random.default_rng(seed)
    n, m = 3, 2
    A = np.eye(n) + 0.1 * rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    plant = LinearPlant(A, B)
    goal = np.array([1.0, -0.5, 0.3]) if x_goal is None else np.asarray(x_goal, float)
    cost = QuadraticCost(np.full(n, 10.0), goal, np.zeros(n), np.full(m, wu))
    return Problem(plant, np.zeros(n), n_steps, cost, np.full(m, -bounds), np.full(m, bounds))
