"""Legendre transform coordinates.

The map ``phi(x) = Pi grad h(x)`` (Pi the Euclidean projector onto Ker A)
is a diffeomorphism from F onto an open convex subset of Ker A. Orbits of
the flow for a linear objective <c, x> become the straight lines
``phi(x0) - t Pi c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ImageMembershipError, UnsupportedError
from .flow import Trajectory
from .geometry import Geometry
from .problem import Objective

INVERSE_MAX_ITER = 200
FRACTION_TO_BOUNDARY = 0.99
ARMIJO = 1e-4
MERIT_EPS = 1e-13


@dataclass(frozen=True)
class ImageCone:
    """Description of the image phi(F).

    ``kind == "full_subspace"``: phi(F) = Ker A (eta = +inf).
    ``kind == "shifted_cone"``: closure of dom h* is {y : y + B'lam = 0, lam_i >= -eta}.
    """

    kind: str
    eta: float


@dataclass(frozen=True)
class LtcJacobian:
    """d phi(x) restricted to Ker A, as a matrix in an orthonormal basis N."""

    basis: np.ndarray
    matrix: np.ndarray

    def apply(self, v) -> np.ndarray:
        return self.basis @ (self.matrix @ (self.basis.T @ v))

    def solve(self, v) -> np.ndarray:
        return self.basis @ np.linalg.solve(self.matrix, self.basis.T @ v)

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


def _max_feasible_step(geom: Geometry, z, dz) -> float:
    """Largest alpha in (0, 1] keeping FRACTION_TO_BOUNDARY of every slack."""
    if not geom.is_affine:
        alpha = 1.0
        g = geom.slacks(z)
        while np.any(geom.slacks(z + alpha * dz) <= (1 - FRACTION_TO_BOUNDARY) * g):
            alpha *= 0.5
            if alpha < 1e-16:
                return 0.0
        return alpha
    g = geom.slacks(z)
    rate = geom.B @ dz
    neg = rate < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, FRACTION_TO_BOUNDARY * float(np.min(-g[neg] / rate[neg])))


def newton_minimize(geom: Geometry, basis, z0, grad, hess, merit, tol, max_iter, error_cls):
    """Damped Newton for a strictly convex function on z0 + span(basis).

    ``grad``/``hess``/``merit`` are callables of z; convergence is declared when
    ``|basis' grad(z)| <= tol``. Steps are clamped by the fraction-to-boundary
    rule and then backtracked with an Armijo test on ``merit``.
    """
    z = np.array(z0, dtype=float)
    iterates = [z.copy()]
    # the step is H^-1 (g - C w) with C spanning (span basis)^perp; this stays
    # well conditioned when H has entries of wildly different size
    comp = linalg.null_space(basis.T) if basis.shape[1] < basis.shape[0] else None
    for _ in range(max_iter):
        gz = grad(z)
        if np.linalg.norm(basis.T @ gz) <= tol:
            return z
        try:
            cho = linalg.cho_factor(hess(z), lower=True)
            v = linalg.cho_solve(cho, gz)
            if comp is not None:
                W = linalg.cho_solve(cho, comp)
                v = v - W @ linalg.solve(comp.T @ W, comp.T @ v, assume_a="pos")
        except (linalg.LinAlgError, ValueError) as exc:
            raise error_cls(f"Newton system not positive definite: {exc}", iterates) from exc
        dz = -v
        alpha = _max_feasible_step(geom, z, dz)
        m0 = merit(z)
        slope = float(gz @ dz)
        # below merit round-off the Armijo test is noise; take the Newton step
        local = -slope <= MERIT_EPS * (1.0 + abs(m0))
        while alpha > 1e-16:
            trial = z + alpha * dz
            if geom.is_interior(trial):
                if local:
                    break
                m1 = merit(trial)
                if np.isfinite(m1) and m1 <= m0 + ARMIJO * alpha * slope:
                    break
            alpha *= 0.5
        else:
            g_norm = np.linalg.norm(basis.T @ gz)
            raise error_cls(f"line search failed (|grad| = {g_norm:.3e})", iterates)
        z = z + alpha * dz
        iterates.append(z.copy())
        if not np.all(np.isfinite(z)):
            raise error_cls("Newton iterates diverged", iterates)
    raise error_cls(f"Newton did not converge in {max_iter} iterations", iterates)


class LtcMap:
    """Legendre transform coordinates of a geometry sliced by ``Ax = b``.

    Parameters
    ----------
    geometry : Geometry
    A, b : array_like, optional
    witness : array_like, optional
        Point of F; defaults to the geometry's Slater witness, which must
        then satisfy Ax = b.
    """

    def __init__(self, geometry: Geometry, A=None, b=None, witness=None):
        self.geometry = geometry
        n = geometry.n
        witness = geometry.witness if witness is None else np.asarray(witness, dtype=float)
        if A is None:
            self.A = self.b = None
            self.basis = np.eye(n)
        else:
            self.A = np.atleast_2d(np.asarray(A, dtype=float))
            self.b = np.asarray(b, dtype=float).reshape(-1)
            self.basis = linalg.null_space(self.A)
            if np.linalg.norm(self.A @ witness - self.b) > 1e-10 * (1 + np.linalg.norm(witness)):
                raise ValueError("witness does not satisfy A x = b")
        geometry.require_interior(witness)
        self.witness = witness
        self.projector = self.basis @ self.basis.T
        self.kernel_eta = geometry.kernel.eta

    @classmethod
    def from_problem(cls, problem) -> "LtcMap":
        return cls(problem.geometry, problem.A, problem.b, problem.x0)

    def project(self, v) -> np.ndarray:
        return self.projector @ np.asarray(v, dtype=float)

    def forward(self, x) -> np.ndarray:
        return self.project(self.geometry.grad_h(x))

    def inverse(self, y) -> np.ndarray:
        """The unique x in F with phi(x) = y.

        Raises ImageMembershipError when Newton fails, which signals that y
        is (numerically) outside phi(F).
        """
        y = np.asarray(y, dtype=float)
        if np.linalg.norm(y - self.project(y)) > 1e-8 * (1 + np.linalg.norm(y)):
            raise ValueError("y must lie in Ker A")
        geom = self.geometry
        return newton_minimize(
            geom,
            self.basis,
            self.witness,
            grad=lambda z: geom.grad_h(z) - y,
            hess=geom.hess_h,
            merit=lambda z: geom.h(z) - float(y @ z),
            tol=1e-10 * (1 + np.linalg.norm(y)),
            max_iter=INVERSE_MAX_ITER,
            error_cls=ImageMembershipError,
        )

    def jacobian(self, x) -> LtcJacobian:
        H = self.geometry.hess_h(x)
        N = self.basis
        return LtcJacobian(N, N.T @ H @ N)

    def image_cone(self) -> ImageCone:
        if not self.geometry.is_affine:
            raise UnsupportedError("image description requires affine constraints")
        if np.isinf(self.kernel_eta):
            return ImageCone("full_subspace", np.inf)
        return ImageCone("shifted_cone", float(self.kernel_eta))


def ltc_forward(ltc: LtcMap, x) -> np.ndarray:
    return ltc.forward(x)


def ltc_inverse(ltc: LtcMap, y) -> np.ndarray:
    return ltc.inverse(y)


def ltc_jacobian(ltc: LtcMap, x) -> LtcJacobian:
    return ltc.jacobian(x)


def image_cone_report(ltc: LtcMap) -> ImageCone:
    return ltc.image_cone()


def straight_line_check(ltc: LtcMap, traj: Trajectory, c) -> float:
    """Max normalised deviation of phi(x(t)) from phi(x0) - t Pi c.

    ``c`` is the gradient of a linear objective (or a linear Objective).
    Uses the trajectory's mirror states when present.
    """
    if isinstance(c, Objective):
        if not c.is_linear:
            raise UnsupportedError("straight-line check requires a linear objective")
        c = c.c
    pc = ltc.project(c)
    if traj.mirror_states is not None:
        phi = traj.mirror_states @ ltc.projector
    else:
        phi = np.array([ltc.forward(x) for x in traj.states])
    dev = phi - phi[0] + traj.times[:, None] * pc
    scale = 1.0 + traj.times * np.linalg.norm(pc)
    return float(np.max(np.linalg.norm(dev, axis=1) / scale))
