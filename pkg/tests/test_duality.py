import numpy as np
import pytest

from conftest import orthant_problem, polytope_problem, quadratic_problem, simplex_problem
from hessflow import UnsupportedError, dual_residuals, dual_trajectory, integrate


class TestDualTrajectory:
    def test_linear_orthant_is_constant(self):
        c = np.array([1.0, 2.0])
        p = orthant_problem(c)
        traj = integrate(p, t_max=5.0)
        dual = dual_trajectory(p, traj)
        assert dual.times[0] > 0
        assert np.max(np.linalg.norm(dual.lambdas - c, axis=1)) <= 1e-8
        np.testing.assert_allclose(dual.averaged_gradients, np.broadcast_to(c, dual.lambdas.shape))
        assert dual.image_ok()

    def test_stationary(self):
        p = orthant_problem([0.0, 0.0])
        dual = dual_trajectory(p, integrate(p, t_max=1.0))
        np.testing.assert_array_equal(dual.lambdas, 0.0)
        assert dual_residuals(p, dual, integrate(p, t_max=1.0)) == (0.0, 0.0)

    def test_image_membership_simplex(self):
        p = simplex_problem([0.0, -1.0, 1.0])
        traj = integrate(p, t_max=10.0)
        dual = dual_trajectory(p, traj)
        assert dual.image_ok()
        assert np.max(dual.quadrature_errors) <= 1e-14

    def test_image_membership_quadratic(self):
        p = quadratic_problem()
        # the quadratic fixture is not a positivity geometry
        with pytest.raises(UnsupportedError):
            dual_trajectory(p, integrate(p, t_max=1.0))

    def test_image_membership_nonlinear_positivity(self):
        from hessflow import Geometry, LegendreKernel, Objective, Problem

        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        geom = Geometry.positivity(LegendreKernel("boltzmann_shannon"), 2)
        p = Problem(Objective.quadratic(Q, [0.5, -1.0]), geom, [1.0, 1.0])
        dual = dual_trajectory(p, integrate(p, t_max=5.0))
        assert dual.image_ok()
        assert np.all(dual.quadrature_errors > 0)

    def test_polytope_unsupported(self):
        p = polytope_problem()
        with pytest.raises(UnsupportedError):
            dual_trajectory(p, integrate(p, t_max=1.0))


class TestDualResiduals:
    def test_positive_cost(self):
        c = np.array([1.0, 2.0])
        p = orthant_problem(c)
        traj = integrate(p, t_max=20.0, stop_grad_tol=0.0)
        lo, comp = dual_residuals(p, dual_trajectory(p, traj), traj)
        assert lo == pytest.approx(1.0, rel=1e-8)
        assert 0 < comp <= 1e-8

    def test_simplex_limit(self):
        p = simplex_problem([0.0, 1.0])
        traj = integrate(p, t_max=1000.0, coordinates="mirror", stop_grad_tol=0.0)
        dual = dual_trajectory(p, traj)
        assert np.linalg.norm(dual.lambdas[-1] - [0.0, 1.0]) <= 1e-3
        lo, comp = dual_residuals(p, dual, traj)
        assert lo >= -1e-3 and comp <= 1e-3

    def test_grid_mismatch(self):
        p = orthant_problem([1.0])
        dual = dual_trajectory(p, integrate(p, t_max=1.0))
        with pytest.raises(ValueError):
            dual_residuals(p, dual, integrate(p, t_max=0.5))
