"""Legendre functions built from a kernel and concave constraints.

Given concave ``g_1..g_p`` and a kernel ``theta``, the open convex set
``C = {x : g_i(x) > 0}`` carries the Legendre function

    h(x) = sum_i theta(g_i(x))

whose Hessian defines the Riemannian metric of the flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import BoundaryError, DegeneracyError, DomainError
from .kernels import LegendreKernel

NONDEG_RTOL = 1e-10


@dataclass(frozen=True)
class ConstraintFunction:
    """A concave constraint g(x) > 0 with first and second derivatives.

    Use :meth:`affine` for ``g(x) = <row, x> - offset``; the callbacks are then
    generated and ``affine_data`` is set.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    affine_data: tuple[np.ndarray, float] | None = None

    @classmethod
    def affine(cls, row, offset=0.0) -> "ConstraintFunction":
        row = np.array(row, dtype=float)
        offset = float(offset)
        n = row.size
        return cls(
            value=lambda x: float(row @ x) - offset,
            gradient=lambda x: row.copy(),
            hessian=lambda x: np.zeros((n, n)),
            affine_data=(row, offset),
        )

    @property
    def is_affine(self) -> bool:
        return self.affine_data is not None


class Geometry:
    """Legendre function ``h = sum theta(g_i)`` on ``C = {g_i > 0}``.

    Parameters
    ----------
    kernel : LegendreKernel
    constraints : sequence of ConstraintFunction
    witness : array_like
        A point with every g_i(witness) > 0 (Slater point).
    """

    def __init__(self, kernel: LegendreKernel, constraints: Sequence[ConstraintFunction], witness):
        if not constraints:
            raise ValueError("at least one constraint is required")
        self.kernel = kernel
        self.constraints = tuple(constraints)
        witness = np.array(witness, dtype=float)
        self.n = witness.size
        self.is_affine = all(c.is_affine for c in self.constraints)
        if not self.is_affine and not kernel.nonincreasing:
            raise DomainError(
                f"kernel {kernel.name!r} is not non-increasing; "
                "non-affine constraints require a non-increasing kernel"
            )
        if self.is_affine:
            self.B = np.array([c.affine_data[0] for c in self.constraints])
            self.d = np.array([c.affine_data[1] for c in self.constraints])
            if self.B.shape[1] != self.n:
                raise ValueError(f"constraint rows have length {self.B.shape[1]}, expected {self.n}")
        else:
            self.B = self.d = None
        self.is_positivity = bool(
            self.is_affine
            and self.B.shape == (self.n, self.n)
            and np.array_equal(self.B, np.eye(self.n))
            and not np.any(self.d)
        )
        self.require_interior(witness)
        self.witness = witness

    @classmethod
    def from_affine(cls, kernel, B, d, witness) -> "Geometry":
        """Constraints ``g_i(x) = <B_i, x> - d_i``."""
        B = np.atleast_2d(np.asarray(B, dtype=float))
        d = np.asarray(d, dtype=float).reshape(-1)
        if d.size != B.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows but d has {d.size} entries")
        return cls(kernel, [ConstraintFunction.affine(r, o) for r, o in zip(B, d)], witness)

    @classmethod
    def positivity(cls, kernel, n, witness=None) -> "Geometry":
        """The nonnegative orthant, ``g_i(x) = x_i``."""
        witness = np.ones(n) if witness is None else witness
        return cls.from_affine(kernel, np.eye(n), np.zeros(n), witness)

    @property
    def p(self) -> int:
        return len(self.constraints)

    def slacks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_affine:
            return self.B @ x - self.d
        return np.array([c.value(x) for c in self.constraints])

    def jacobian(self, x) -> np.ndarray:
        """Constraint gradients stacked as rows (p x n)."""
        if self.is_affine:
            return self.B
        return np.array([c.gradient(x) for c in self.constraints])

    def require_interior(self, x) -> np.ndarray:
        g = self.slacks(x)
        bad = np.flatnonzero(~(g > 0))
        if bad.size:
            raise BoundaryError(
                f"point is not strictly feasible: g_i <= 0 for i in {(bad + 1).tolist()}", bad
            )
        return g

    def is_interior(self, x) -> bool:
        g = self.slacks(x)
        return bool(np.all(g > 0))

    def h(self, x) -> float:
        return float(np.sum(self.kernel.value(self.require_interior(x))))

    def grad_h(self, x) -> np.ndarray:
        g = self.require_interior(x)
        return self.jacobian(x).T @ np.atleast_1d(self.kernel.first(g))

    def hess_h(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = self.require_interior(x)
        J = self.jacobian(x)
        H = (J.T * np.atleast_1d(self.kernel.second(g))) @ J
        if not self.is_affine:
            t1 = np.atleast_1d(self.kernel.first(g))
            for c, w in zip(self.constraints, t1):
                if not c.is_affine:
                    H = H + w * np.asarray(c.hessian(x), dtype=float)
        return 0.5 * (H + H.T)

    def factor(self, x):
        """Cholesky factor of H(x) for :func:`scipy.linalg.cho_solve`."""
        H = self.hess_h(x)
        try:
            return linalg.cho_factor(H, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise DegeneracyError(f"Hessian is not positive definite at x={x}: {exc}") from exc

    def bregman_h(self, y, x) -> float:
        """D_h(y, x) = h(y) - h(x) - <grad h(x), y - x>.

        ``y`` may lie on the boundary (some g_i(y) = 0) when the kernel has
        theta(0) < inf.
        """
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        gx = self.require_interior(x)
        gy = self.slacks(y)
        if self.is_affine:
            return float(np.sum(self.kernel.bregman(gy, gx)))
        hy = float(np.sum(self.kernel.value(gy)))
        return max(hy - self.h(x) - float(self.grad_h(x) @ (y - x)), 0.0)

    def check_nondegeneracy(self, x) -> bool:
        """Do the constraint gradients at x span R^n?"""
        J = self.jacobian(np.asarray(x, dtype=float))
        if J.shape[0] < self.n:
            return False
        sv = np.linalg.svd(J, compute_uv=False)
        return bool(sv[-1] > NONDEG_RTOL * sv[0])
