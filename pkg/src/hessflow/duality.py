"""Dual trajectory for positivity-constrained problems.

For h(x) = sum theta(x_i) the path

    lambda(t) = (grad h(x0) - grad h(x(t))) / t

stays in c(t) + Im A', where c(t) is the running average of grad f along
the primal trajectory, and approaches the dual optimal set as t grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid

from .errors import UnsupportedError
from .flow import Trajectory, mirror_path
from .problem import Problem

IMAGE_RTOL = 1e-6
QUAD_SAFETY = 2.0


@dataclass
class DualTrajectory:
    times: np.ndarray
    lambdas: np.ndarray
    averaged_gradients: np.ndarray
    image_residuals: np.ndarray
    quadrature_errors: np.ndarray

    def image_ok(self, rtol: float = IMAGE_RTOL) -> bool:
        """lambda(t) in c(t) + Im A' up to ``rtol (1 + |lambda|)`` plus quadrature error."""
        bound = rtol * (1.0 + np.linalg.norm(self.lambdas, axis=1)) + self.quadrature_errors
        return bool(np.all(self.image_residuals <= bound))


def dual_trajectory(problem: Problem, traj: Trajectory) -> DualTrajectory:
    if not problem.geometry.is_positivity:
        raise UnsupportedError("dual trajectories are defined for positivity constraints g_i(x) = x_i")
    Y = mirror_path(problem, traj)
    grads = np.array([problem.grad_f(x) for x in traj.states])
    integral = cumulative_trapezoid(grads, traj.times, axis=0, initial=0.0)
    # trapezoid-vs-Simpson gap, with a safety factor, as the quadrature error bound
    if traj.times.size >= 3:
        finer = cumulative_simpson(grads, x=traj.times, axis=0, initial=0.0)
        quad = QUAD_SAFETY * np.linalg.norm(integral - finer, axis=1)
    else:
        quad = np.zeros(traj.times.size)
    mask = traj.times > 0
    t = traj.times[mask]
    lambdas = (Y[0] - Y[mask]) / t[:, None]
    averaged = integral[mask] / t[:, None]
    residuals = np.array([np.linalg.norm(problem.project_kernel(l - c)) for l, c in zip(lambdas, averaged)])
    return DualTrajectory(t, lambdas, averaged, residuals.reshape(-1), quad[mask] / t)


def dual_residuals(problem: Problem, dual: DualTrajectory, primal: Trajectory) -> tuple[float, float]:
    """``(min_i lambda_i, <lambda, x>)`` at the last common sample."""
    if dual.times.size == 0:
        return 0.0, 0.0
    k = int(np.searchsorted(primal.times, dual.times[-1]))
    if k >= primal.times.size or not np.isclose(primal.times[k], dual.times[-1], rtol=1e-12, atol=0):
        raise ValueError("dual and primal sample grids do not match")
    lam = dual.lambdas[-1]
    return float(np.min(lam)), float(lam @ primal.states[k])
