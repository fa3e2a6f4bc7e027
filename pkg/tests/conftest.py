import numpy as np
import pytest

from hessflow import ConstraintFunction, Geometry, LegendreKernel, Objective, Problem

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def simplex_problem(c, kernel="boltzmann_shannon", n=None, x0=None, gamma=None):
    c = np.asarray(c, dtype=float)
    n = c.size if n is None else n
    x0 = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=float)
    geom = Geometry.positivity(LegendreKernel(kernel, gamma), n, witness=x0)
    return Problem(Objective.linear(c), geom, x0, A=np.ones((1, n)), b=[x0.sum()])


def orthant_problem(c, kernel="boltzmann_shannon", x0=None, gamma=None):
    c = np.asarray(c, dtype=float)
    x0 = np.ones(c.size) if x0 is None else np.asarray(x0, dtype=float)
    geom = Geometry.positivity(LegendreKernel(kernel, gamma), c.size, witness=x0)
    return Problem(Objective.linear(c), geom, x0)


POLYTOPE_B = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
POLYTOPE_D = np.array([0.0, 0.0, -4.0, -2.0])


def polytope_problem(kernel="log", c=(1.0, 1.0), x0=(1.0, 1.0)):
    geom = Geometry.from_affine(LegendreKernel(kernel), POLYTOPE_B, POLYTOPE_D, x0)
    return Problem(Objective.linear(c), geom, x0)


def ball_geometry(kernel="inverse"):
    """Unit disc intersected with x_1 > -0.5: one concave, one affine constraint."""
    disc = ConstraintFunction(
        value=lambda x: 1.0 - float(np.dot(x, x)),
        gradient=lambda x: -2.0 * np.asarray(x, dtype=float),
        hessian=lambda x: -2.0 * np.eye(len(x)),
    )
    half = ConstraintFunction.affine([1.0, 0.0], -0.5)
    return Geometry(LegendreKernel(kernel), [disc, half], witness=[0.0, 0.0])


def quadratic_problem():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    geom = Geometry.from_affine(
        LegendreKernel("power", 0.5),
        np.vstack([-np.eye(2), np.eye(2)]),
        np.array([-2.0, -2.0, 0.0, 0.0]),
        [1.0, 1.0],
    )
    return Problem(Objective.quadratic(Q, [-1.0, 1.0]), geom, [1.0, 1.0])


def random_interior(geom, rng, lo, hi, count):
    pts = []
    while len(pts) < count:
        x = rng.uniform(lo, hi)
        if geom.is_interior(x):
            pts.append(x)
    return pts


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)
