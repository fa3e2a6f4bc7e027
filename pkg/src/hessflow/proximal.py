"""Bregman proximal steps and the viscosity path.

For a linear objective both discrete objects land exactly on the flow's
orbit: the k-th proximal iterate equals x(mu_0 + ... + mu_{k-1}) and the
viscosity minimiser with parameter t equals x(t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HorizonError, SubproblemError, UnsupportedError
from .flow import Trajectory
from .problem import Problem
from .transform import newton_minimize

KKT_RTOL = 1e-10
MAX_NEWTON = 100


@dataclass(frozen=True)
class ProxSchedule:
    step_sizes: tuple

    def __post_init__(self):
        steps = tuple(float(m) for m in self.step_sizes)
        if any(not m > 0 for m in steps):
            raise ValueError("step sizes must be positive")
        object.__setattr__(self, "step_sizes", steps)

    @property
    def cumulative(self) -> np.ndarray:
        """Times t_k = mu_0 + ... + mu_{k-1}, starting with t_0 = 0."""
        return np.concatenate([[0.0], np.cumsum(self.step_sizes)])


def bregman_prox_step(problem: Problem, x, mu: float) -> np.ndarray:
    """argmin { f(z) + D_h(z, x)/mu : Az = b }."""
    x = np.asarray(x, dtype=float)
    if mu == 0:
        return x.copy()
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    obj = problem.objective
    if obj.hessian is None:
        raise UnsupportedError("proximal steps need the objective Hessian")
    geom = problem.geometry
    grad_h_x = geom.grad_h(x)

    def grad(z):
        return geom.grad_h(z) - grad_h_x + mu * problem.grad_f(z)

    def tol_at(z):
        return KKT_RTOL * (1.0 + np.linalg.norm(problem.grad_f(z)))

    z = newton_minimize(
        geom,
        problem.kernel_basis,
        x,
        grad=grad,
        hess=lambda z: geom.hess_h(z) + mu * np.asarray(obj.hessian(z), dtype=float),
        merit=lambda z: geom.h(z) - float(grad_h_x @ z) + mu * problem.f(z),
        tol=tol_at(x),
        max_iter=MAX_NEWTON,
        error_cls=SubproblemError,
    )
    # gradient tolerance is tied to grad f at the solution, which can differ from x
    if np.linalg.norm(problem.kernel_basis.T @ grad(z)) > tol_at(z):
        raise SubproblemError("proximal KKT residual above tolerance", [z])
    return z


def viscosity_point(problem: Problem, t: float) -> np.ndarray:
    """argmin { <c, x> + D_h(x, x0)/t : Ax = b } for a linear objective."""
    if not problem.objective.is_linear:
        raise UnsupportedError("the viscosity path is defined for linear objectives")
    if not t > 0:
        raise ValueError("t must be positive")
    return bregman_prox_step(problem, problem.x0, t)


def prox_orbit_check(problem: Problem, schedule: ProxSchedule, traj: Trajectory) -> float:
    """max_k |x^k - x(t_k)| for proximal iterates started at x0."""
    if not problem.objective.is_linear:
        raise UnsupportedError("orbit coincidence holds for linear objectives only")
    times = schedule.cumulative
    if times[-1] > traj.t_final * (1 + 1e-12):
        raise HorizonError(f"schedule reaches t={times[-1]} beyond trajectory end {traj.t_final}")
    x = problem.x0.copy()
    worst = 0.0
    for mu, t in zip(schedule.step_sizes, times[1:]):
        x = bregman_prox_step(problem, x, mu)
        worst = max(worst, float(np.linalg.norm(x - traj.interpolate(t))))
    return worst
