"""The constrained problem min f(x) s.t. x in closure(C), Ax = b."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, optimize

from .errors import DegeneracyError, UnsupportedError
from .geometry import Geometry

FEAS_TOL = 1e-8
EQ_TOL = 1e-10
FD_RTOL = 1e-5


@dataclass(frozen=True)
class Objective:
    """Objective function with its gradient (and Hessian when known).

    Build with :meth:`linear`, :meth:`quadratic` or :meth:`callback`.
    The quadratic form is ``0.5 x'Qx + c'x``.
    """

    kind: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray] | None = None
    c: np.ndarray | None = None
    Q: np.ndarray | None = None

    @classmethod
    def linear(cls, c) -> "Objective":
        c = np.array(c, dtype=float)
        n = c.size
        return cls("linear", lambda x: float(c @ x), lambda x: c.copy(),
                   lambda x: np.zeros((n, n)), c=c)

    @classmethod
    def quadratic(cls, Q, c) -> "Objective":
        Q = np.atleast_2d(np.array(Q, dtype=float))
        c = np.array(c, dtype=float)
        if Q.shape != (c.size, c.size):
            raise ValueError(f"Q has shape {Q.shape}, expected {(c.size, c.size)}")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(Q)[0] < -1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        return cls("quadratic", lambda x: float(0.5 * x @ Q @ x + c @ x),
                   lambda x: Q @ x + c, lambda x: Q.copy(), c=c, Q=Q)

    @classmethod
    def callback(cls, value, gradient, hessian=None) -> "Objective":
        return cls("callback", value, gradient, hessian)

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"


@dataclass(frozen=True)
class FeasibilityReport:
    equality_residual: float
    min_slack: float
    feasible: bool


def _check_gradient(objective: Objective, x: np.ndarray) -> None:
    g = np.asarray(objective.gradient(x), dtype=float)
    fd = optimize.approx_fprime(x, objective.value, 1e-7 * (1.0 + np.abs(x)))
    if np.linalg.norm(fd - g) > FD_RTOL * max(1.0, np.linalg.norm(g)) + 1e-6:
        raise ValueError(f"objective gradient inconsistent with finite differences at x0: {g} vs {fd}")


class Problem:
    """Objective + equality constraints + Legendre geometry + start point.

    Parameters
    ----------
    objective : Objective
    geometry : Geometry
    x0 : array_like
        Strictly feasible start: every g_i(x0) > 0 and A x0 = b.
    A, b : array_like, optional
        Full-row-rank equality constraints with m < n rows.
    """

    def __init__(self, objective: Objective, geometry: Geometry, x0, A=None, b=None):
        self.objective = objective
        self.geometry = geometry
        self.x0 = np.array(x0, dtype=float)
        n = self.n = geometry.n
        if self.x0.shape != (n,):
            raise ValueError(f"x0 has shape {self.x0.shape}, expected ({n},)")
        if objective.c is not None and objective.c.size != n:
            raise ValueError(f"objective has dimension {objective.c.size}, expected {n}")
        if (A is None) != (b is None):
            raise ValueError("A and b must be given together")
        if A is not None:
            A = np.atleast_2d(np.array(A, dtype=float))
            b = np.array(b, dtype=float).reshape(-1)
            m = A.shape[0]
            if A.shape[1] != n or b.size != m:
                raise ValueError(f"A is {A.shape} and b has {b.size} entries; expected m x {n} and m")
            if not m < n:
                raise ValueError(f"need fewer equality constraints than variables (m={m}, n={n})")
            if np.linalg.matrix_rank(A) != m:
                raise ValueError("A must have full row rank")
            self.A, self.b = A, b
            self._AAt = linalg.cho_factor(A @ A.T)
            self.kernel_basis = linalg.null_space(A)
        else:
            self.A = self.b = None
            self.kernel_basis = np.eye(n)
        geometry.require_interior(self.x0)
        res = self.equality_residual(self.x0)
        if res > EQ_TOL * (1.0 + np.linalg.norm(self.x0)):
            raise ValueError(f"x0 violates A x0 = b (residual {res:.3e})")
        if objective.kind == "callback":
            _check_gradient(objective, self.x0)

    @property
    def m(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    def f(self, x) -> float:
        return float(self.objective.value(np.asarray(x, dtype=float)))

    def grad_f(self, x) -> np.ndarray:
        return np.asarray(self.objective.gradient(np.asarray(x, dtype=float)), dtype=float)

    def equality_residual(self, x) -> float:
        if self.A is None:
            return 0.0
        return float(np.linalg.norm(self.A @ x - self.b))

    def project_kernel(self, v) -> np.ndarray:
        """Euclidean projection onto Ker A."""
        v = np.asarray(v, dtype=float)
        if self.A is None:
            return v.copy()
        return v - self.A.T @ linalg.cho_solve(self._AAt, self.A @ v)

    def _schur(self, HinvAt):
        try:
            return linalg.cho_factor(self.A @ HinvAt)
        except linalg.LinAlgError as exc:
            raise DegeneracyError(f"A H^-1 A' is not positive definite: {exc}") from exc

    def descent_data(self, x):
        """Riemannian gradient, equality multiplier and metric norm at x.

        Returns ``(v, z, norm)`` with ``v = H^-1 (grad f - A'z)`` in Ker A and
        ``norm = sqrt(<H v, v>)``.
        """
        x = np.asarray(x, dtype=float)
        cho = self.geometry.factor(x)
        g = self.grad_f(x)
        v = linalg.cho_solve(cho, g)
        z = np.zeros(self.m)
        if self.A is not None:
            HinvAt = linalg.cho_solve(cho, self.A.T)
            z = linalg.cho_solve(self._schur(HinvAt), self.A @ v)
            v = v - HinvAt @ z
        norm = float(np.sqrt(max((g - (self.A.T @ z if self.A is not None else 0.0)) @ v, 0.0)))
        return v, z, norm

    def riemannian_gradient(self, x) -> np.ndarray:
        """Gradient of f restricted to F for the metric <H(x)u, v>."""
        return self.descent_data(x)[0]

    def metric_projection(self, x, v) -> np.ndarray:
        """H(x)-orthogonal projection of v onto Ker A."""
        v = np.asarray(v, dtype=float)
        if self.A is None:
            self.geometry.require_interior(x)
            return v.copy()
        cho = self.geometry.factor(x)
        HinvAt = linalg.cho_solve(cho, self.A.T)
        return v - HinvAt @ linalg.cho_solve(self._schur(HinvAt), self.A @ v)

    def feasibility(self, x) -> FeasibilityReport:
        x = np.asarray(x, dtype=float)
        res = self.equality_residual(x)
        slack = float(np.min(self.geometry.slacks(x)))
        return FeasibilityReport(res, slack, bool(res <= FEAS_TOL and slack > 0))

    def optimality_residual(self, x) -> float:
        """Distance from -grad f(x) to N_C(x) + Im A' (zero certifies optimality).

        Constraints with g_i(x) <= 1e-8 (1 + |x|) count as active. The
        distance is a nonnegative least-squares problem in the multipliers
        after eliminating Im A' by projecting onto Ker A.
        """
        geom = self.geometry
        if not geom.is_affine:
            raise UnsupportedError("optimality residual requires affine constraints")
        x = np.asarray(x, dtype=float)
        eps_act = 1e-8 * (1.0 + np.linalg.norm(x))
        active = geom.slacks(x) <= eps_act
        rhs = self.project_kernel(self.grad_f(x))
        if not np.any(active):
            return float(np.linalg.norm(rhs))
        M = np.column_stack([self.project_kernel(row) for row in geom.B[active]])
        _, rnorm = optimize.nnls(M, rhs)
        return float(rnorm)
