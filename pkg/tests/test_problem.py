import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import lsq_linear

from conftest import POLYTOPE_B, POLYTOPE_D, ball_geometry, orthant_problem, polytope_problem, simplex_problem
from hessflow import (
    BoundaryError,
    Geometry,
    LegendreKernel,
    Objective,
    Problem,
    UnsupportedError,
)

REPLICATOR_C = [0.0, -1.0, 1.0]


def general_problem(kernel, A, x, rng, gamma=None):
    """Positivity geometry with random quadratic objective and b = A x."""
    n = x.size
    M = rng.normal(size=(n, n))
    obj = Objective.quadratic(M @ M.T, rng.normal(size=n))
    geom = Geometry.positivity(LegendreKernel(kernel, gamma), n, witness=x)
    return Problem(obj, geom, x, A=A, b=A @ x)


class TestConstruction:
    def test_equality_violation(self):
        geom = Geometry.positivity(LegendreKernel("log"), 2)
        with pytest.raises(ValueError, match="violates"):
            Problem(Objective.linear([1, 1]), geom, [1.0, 1.0], A=[[1.0, 1.0]], b=[1.0])

    def test_rank_and_size(self):
        geom = Geometry.positivity(LegendreKernel("log"), 2)
        with pytest.raises(ValueError, match="fewer"):
            Problem(Objective.linear([1, 1]), geom, [1.0, 1.0], A=np.eye(2), b=[1.0, 1.0])
        geom3 = Geometry.positivity(LegendreKernel("log"), 3)
        with pytest.raises(ValueError, match="rank"):
            Problem(Objective.linear([1, 1, 1]), geom3, [1.0] * 3, A=[[1, 1, 1], [2, 2, 2]], b=[3, 6])

    def test_boundary_start(self):
        geom = Geometry.positivity(LegendreKernel("log"), 2)
        with pytest.raises(BoundaryError):
            Problem(Objective.linear([1, 1]), geom, [1.0, 0.0])

    def test_dimension_mismatch(self):
        geom = Geometry.positivity(LegendreKernel("log"), 2)
        with pytest.raises(ValueError, match="dimension"):
            Problem(Objective.linear([1, 1, 1]), geom, [1.0, 1.0])

    def test_callback_gradient_spot_check(self):
        geom = Geometry.positivity(LegendreKernel("log"), 2)
        good = Objective.callback(lambda x: float(np.sum(x**3)), lambda x: 3 * x**2)
        Problem(good, geom, [1.0, 2.0])
        bad = Objective.callback(lambda x: float(np.sum(x**3)), lambda x: 2 * x**2)
        with pytest.raises(ValueError, match="finite differences"):
            Problem(bad, geom, [1.0, 2.0])

    def test_quadratic_must_be_psd(self):
        with pytest.raises(ValueError):
            Objective.quadratic([[1.0, 0.0], [0.0, -1.0]], [0, 0])


class TestRiemannianGradient:
    def test_replicator_example(self):
        p = simplex_problem(REPLICATOR_C)
        np.testing.assert_allclose(p.riemannian_gradient(p.x0), [0, -1 / 3, 1 / 3], atol=1e-15)

    def test_unconstrained_entropy(self):
        p = orthant_problem([3.0, 1.0], x0=[1.0, 2.0])
        np.testing.assert_allclose(p.riemannian_gradient([1.0, 2.0]), [3.0, 2.0])

    def test_zero_gradient(self):
        p = simplex_problem([0.0, 0.0, 0.0])
        np.testing.assert_array_equal(p.riemannian_gradient([0.2, 0.3, 0.5]), 0.0)

    def test_infeasible_point(self):
        with pytest.raises(BoundaryError):
            simplex_problem(REPLICATOR_C).riemannian_gradient([1.5, -0.5, 0.0])

    def test_duality_condition(self, rng):
        x = rng.uniform(0.2, 2.0, size=5)
        A = rng.normal(size=(2, 5))
        p = general_problem("log", A, x, rng)
        v = p.riemannian_gradient(x)
        np.testing.assert_allclose(A @ v, 0.0, atol=1e-12)
        for w in (p.kernel_basis @ rng.normal(size=3) for _ in range(20)):
            lhs = (p.geometry.hess_h(x) @ v) @ w
            assert lhs == pytest.approx(p.grad_f(x) @ w, rel=1e-8, abs=1e-8)

    def test_metric_norm(self, rng):
        x = rng.uniform(0.2, 2.0, size=4)
        p = general_problem("inverse", rng.normal(size=(1, 4)), x, rng)
        v, _, norm = p.descent_data(x)
        assert norm == pytest.approx(np.sqrt(v @ p.geometry.hess_h(x) @ v), rel=1e-10)


class TestEquationForms:
    """Closed-form expressions of the gradient field for classical geometries."""

    def test_entropy_general_equality(self, rng):
        A = rng.normal(size=(2, 5))
        for _ in range(100):
            x = rng.uniform(0.05, 3.0, size=5)
            p = general_problem("boltzmann_shannon", A, x, rng)
            X = np.diag(x)
            P = np.eye(5) - X @ A.T @ np.linalg.solve(A @ X @ A.T, A)
            expected = P @ X @ p.grad_f(x)
            assert np.linalg.norm(p.riemannian_gradient(x) - expected) <= 1e-10 * (1 + np.linalg.norm(expected))

    def test_replicator_form(self, rng):
        c = rng.normal(size=4)
        p = simplex_problem(c, n=4)
        for _ in range(100):
            x = rng.dirichlet(np.ones(4))
            expected = x * (c - x @ c)
            assert np.max(np.abs(p.riemannian_gradient(x) - expected)) <= 1e-10

    def test_log_barrier_affine_scaling(self, rng):
        A = rng.normal(size=(2, 5))
        for _ in range(100):
            x = rng.uniform(0.05, 3.0, size=5)
            p = general_problem("log", A, x, rng)
            X2 = np.diag(x**2)
            P = np.eye(5) - X2 @ A.T @ np.linalg.solve(A @ X2 @ A.T, A)
            expected = P @ X2 @ p.grad_f(x)
            assert np.linalg.norm(p.riemannian_gradient(x) - expected) <= 1e-10 * (1 + np.linalg.norm(expected))

    @pytest.mark.parametrize("gamma", [0.3, 0.5, 0.8])
    def test_power_simplex(self, rng, gamma):
        c = rng.normal(size=4)
        p = simplex_problem(c, kernel="power", n=4, gamma=gamma)
        for _ in range(100):
            x = rng.dirichlet(np.ones(4))
            w = x ** (2 - gamma)
            expected = w / (1 - gamma) * (c - (w @ c) / w.sum())
            assert np.max(np.abs(p.riemannian_gradient(x) - expected)) <= 1e-10


class TestMetricProjection:
    def test_no_equality(self):
        p = orthant_problem([1.0, 1.0])
        np.testing.assert_array_equal(p.metric_projection([1.0, 2.0], [3.0, -4.0]), [3.0, -4.0])

    def test_two_by_two(self):
        geom = Geometry.positivity(LegendreKernel("boltzmann_shannon"), 2, witness=[0.5, 0.5])
        p = Problem(Objective.linear([0, 0]), geom, [0.5, 0.5], A=[[1.0, 1.0]], b=[1.0])
        np.testing.assert_allclose(p.metric_projection([0.5, 0.5], [1.0, 0.0]), [0.5, -0.5])

    def test_idempotent_and_orthogonal(self, rng):
        x = rng.uniform(0.2, 2.0, size=5)
        A = rng.normal(size=(2, 5))
        p = general_problem("log", A, x, rng)
        H = p.geometry.hess_h(x)
        for v in rng.normal(size=(10, 5)):
            pv = p.metric_projection(x, v)
            np.testing.assert_allclose(A @ pv, 0, atol=1e-12)
            np.testing.assert_allclose(p.metric_projection(x, pv), pv, atol=1e-12)
            w = p.kernel_basis @ rng.normal(size=3)
            assert (v - pv) @ H @ w == pytest.approx(0.0, abs=1e-10 * np.linalg.norm(v))


class TestFeasibility:
    def test_start_is_feasible(self):
        p = simplex_problem(REPLICATOR_C)
        assert p.feasibility(p.x0).feasible

    def test_equality_violation(self):
        rep = simplex_problem(REPLICATOR_C).feasibility([0.5, 0.5, 0.1])
        assert rep.equality_residual == pytest.approx(0.1)
        assert not rep.feasible

    def test_negative_slack(self):
        rep = orthant_problem([1.0, 1.0]).feasibility([1.0, -1.0])
        assert rep.min_slack == -1.0
        assert not rep.feasible

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    def test_report_consistent(self, x):
        p = simplex_problem(REPLICATOR_C)
        rep = p.feasibility(np.array(x))
        assert rep.feasible == (rep.equality_residual <= 1e-8 and rep.min_slack > 0)


def lsq_oracle(p, x):
    """Bounded least squares over (lambda >= 0 on active rows, free z)."""
    g = p.geometry.slacks(x)
    act = g <= 1e-8 * (1 + np.linalg.norm(x))
    cols = [p.geometry.B[act].T]
    lb = [np.zeros(act.sum())]
    if p.A is not None:
        cols.append(-p.A.T)
        lb.append(np.full(p.m, -np.inf))
    M = np.hstack(cols)
    if M.shape[1] == 0:
        return float(np.linalg.norm(p.grad_f(x)))
    sol = lsq_linear(M, p.grad_f(x), bounds=(np.concatenate(lb), np.inf), tol=1e-14, lsmr_tol="auto")
    return float(np.linalg.norm(M @ sol.x - p.grad_f(x)))


class TestOptimalityResidual:
    def test_interior_stationary(self):
        p = simplex_problem([1.0, 1.0, 1.0])
        assert p.optimality_residual([0.2, 0.3, 0.5]) == pytest.approx(0.0, abs=1e-14)

    def test_optimal_vertex(self):
        p = simplex_problem(REPLICATOR_C)
        assert p.optimality_residual([0.0, 1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_non_optimal_vertex(self):
        assert simplex_problem(REPLICATOR_C).optimality_residual([1.0, 0.0, 0.0]) > 0.1

    def test_agrees_with_bounded_least_squares(self, rng):
        p = polytope_problem(c=(1.0, 0.5))
        pts = [np.array([0.0, 0.0]), np.array([2.0, 0.0]), np.array([0.0, 4.0]), np.array([3.0, 1.0]),
               np.array([1.0, 1.0]), np.array([0.0, 2.0])]
        for x in pts:
            assert p.optimality_residual(x) == pytest.approx(lsq_oracle(p, x), abs=1e-10)
        q = simplex_problem(rng.normal(size=4), n=4)
        for _ in range(20):
            x = rng.dirichlet(np.ones(4))
            x[rng.integers(0, 4)] = 0.0
            x /= x.sum()
            assert q.optimality_residual(x) == pytest.approx(lsq_oracle(q, x), abs=1e-10)

    def test_nonaffine_unsupported(self):
        geom = ball_geometry("log")
        p = Problem(Objective.linear([1.0, 0.0]), geom, [0.0, 0.0])
        with pytest.raises(UnsupportedError):
            p.optimality_residual([0.0, 0.0])


def test_polytope_fixture_data():
    geom = Geometry.from_affine(LegendreKernel("log"), POLYTOPE_B, POLYTOPE_D, [1.0, 1.0])
    np.testing.assert_allclose(geom.slacks([1.0, 1.0]), [1.0, 1.0, 2.0, 2.0])
