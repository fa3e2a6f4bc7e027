"""Integration of the Hessian steepest-descent flow and trajectory diagnostics.

The integrator is an explicit Dormand-Prince 5(4) pair with PI step control
and dense output. Two safeguards adapt it to interior-point geometry:

* a fraction-to-boundary guard rejects (and halves) any step that would
  shrink some slack g_i by more than ``boundary_fraction``;
* the local error is measured relative to the slacks as well as to the
  state, so components decaying toward the boundary keep full relative
  accuracy (their logarithms are what the Legendre coordinates see).

With ``coordinates="mirror"`` (positivity constraints only) the state is
y = grad h(x) and x is recovered through (theta')^{-1}. This keeps
log-scale information even after x_i underflows in double precision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .errors import (
    BoundaryError,
    DegeneracyError,
    DomainError,
    HessFlowError,
    HorizonError,
    UnsupportedError,
)
from .geometry import Geometry
from .problem import Problem

logger = logging.getLogger(__name__)

TERMINATIONS = ("gradient_converged", "t_max_reached", "blow_up_detected", "step_limit")

# Dormand-Prince 5(4) tableau, error weights and dense-output coefficients.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1.0, -2.8535800653862835, 3.0717434641059005, -1.1270175653862835],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 4.023133379230305, -6.249321565289, 2.675424484351598],
    [0.0, -3.7324019615885042, 10.068970589843675, -5.685526961588504],
    [0.0, 2.5548038301849423, -6.399112377351017, 3.5219323679207912],
    [0.0, -1.3744241142186024, 3.272657752246729, -1.7672812570757455],
    [0.0, 1.3824689317781436, -3.764937863556287, 2.382468931778144],
])

STEP_UNDERFLOW = 1e-14
D_FLOOR = 1e-14


@dataclass
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    t_max: float = 10.0
    max_steps: int = 10**6
    boundary_fraction: float = 0.99
    stop_grad_tol: float = 1e-10
    sample_count: int = 200
    coordinates: str = "primal"
    blow_up_factor: float = 1e8

    def __post_init__(self):
        for name in ("rtol", "atol", "max_steps", "boundary_fraction", "sample_count", "blow_up_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_max < 0 or self.stop_grad_tol < 0:
            raise ValueError("t_max and stop_grad_tol must be nonnegative")
        if not self.boundary_fraction < 1:
            raise ValueError("boundary_fraction must be < 1")
        if self.coordinates not in ("primal", "mirror"):
            raise ValueError("coordinates must be 'primal' or 'mirror'")


@dataclass
class Trajectory:
    """Samples of x(t) on a uniform grid, plus the dense output of the run.

    ``mirror_states`` holds grad h(x(t)) when the run used mirror coordinates.
    """

    times: np.ndarray
    states: np.ndarray
    f_values: np.ndarray
    metric_grad_norms: np.ndarray
    termination: str
    t_final: float
    n_steps: int = 0
    n_rejected: int = 0
    mirror_states: np.ndarray | None = None
    _segments: tuple = field(default=(), repr=False)
    _to_state: object = field(default=None, repr=False)

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    def interpolate(self, t) -> np.ndarray:
        """State at time t from the integrator's dense output."""
        t = float(t)
        if t < 0 or t > self.t_final * (1 + 1e-12) + 1e-14:
            raise HorizonError(f"t={t} outside integrated horizon [0, {self.t_final}]")
        seg_t, seg_h, seg_y, seg_q = self._segments
        if len(seg_t) == 0:
            return self.states[0].copy()
        k = int(np.clip(np.searchsorted(seg_t, t, side="right") - 1, 0, len(seg_t) - 1))
        s = min((t - seg_t[k]) / seg_h[k], 1.0)
        y = seg_y[k] + seg_h[k] * seg_q[k] @ np.cumprod(np.full(4, s))
        return self._to_state(y)


@dataclass(frozen=True)
class RateEstimate:
    model: str
    coefficient: float
    exponent_or_rate: float
    fit_quality: float


class _Rejected(HessFlowError):
    pass


def _primal_system(problem: Problem, opts: IntegratorOptions):
    geom = problem.geometry

    def rhs(x):
        v, _, norm = problem.descent_data(x)
        return -v, norm

    def error_norm(x, x_new, err):
        scale = opts.atol + opts.rtol * np.maximum(np.abs(x), np.abs(x_new))
        e_state = np.max(np.abs(err) / scale)
        g = np.minimum(geom.slacks(x), geom.slacks(x_new))
        e_slack = np.max(np.abs(geom.jacobian(x_new) @ err) / (opts.rtol * g))
        return max(e_state, e_slack)

    def accept(x, delta):
        delta = problem.metric_projection(x, delta)
        x_new = x + delta
        g_new = geom.slacks(x_new)
        if np.any(g_new <= (1.0 - opts.boundary_fraction) * geom.slacks(x)):
            raise _Rejected("fraction-to-boundary")
        return x_new

    def to_state(x):
        return x

    return problem.x0.copy(), rhs, error_norm, accept, to_state


def _mirror_system(problem: Problem, opts: IntegratorOptions):
    geom = problem.geometry
    if not geom.is_positivity:
        raise UnsupportedError("mirror coordinates require positivity constraints g_i(x) = x_i")
    kernel = geom.kernel
    A, b = problem.A, problem.b
    eta = kernel.eta

    def to_state(y):
        return np.atleast_1d(kernel.conjugate_grad(y))

    def rhs(y):
        x = to_state(y)
        D = np.atleast_1d(kernel.inverse_second(x))
        g = problem.grad_f(x)
        w = g
        if A is not None:
            S = (A * D) @ A.T
            try:
                z = linalg.solve(S, A @ (D * g), assume_a="pos")
            except linalg.LinAlgError as exc:
                raise DegeneracyError(str(exc)) from exc
            w = g - A.T @ z
        return -w, float(np.sqrt(max(w @ (D * w), 0.0)))

    def error_norm(y, y_new, err):
        scale = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y_new))
        return np.max(np.abs(err) / scale)

    def bregman_project(y):
        # shift y along Im A' until A x(y) = b
        mu = np.zeros(A.shape[0])
        for _ in range(50):
            u = y + A.T @ mu
            x = to_state(u)
            r = A @ x - b
            if np.linalg.norm(r) <= 1e-15 * (1.0 + np.linalg.norm(b)):
                break
            J = (A * np.atleast_1d(kernel.inverse_second(x))) @ A.T
            step = linalg.solve(J, r, assume_a="pos")
            mu = mu - step
            if np.linalg.norm(step) <= 1e-16 * (1.0 + np.linalg.norm(mu)):
                break
        return y + A.T @ mu

    def accept(y, delta):
        y_new = y + delta
        if np.isfinite(eta):
            if np.any(eta - y_new <= (1.0 - opts.boundary_fraction) * (eta - y)):
                raise _Rejected("fraction-to-boundary")
        if A is not None:
            y_new = bregman_project(y_new)
        return y_new

    y0 = np.atleast_1d(kernel.first(problem.x0)).astype(float)
    return y0, rhs, error_norm, accept, to_state


def integrate(problem: Problem, opts: IntegratorOptions | None = None, **kwargs) -> Trajectory:
    """Integrate x' = -grad_H f(x) from problem.x0 over [0, opts.t_max].

    Keyword arguments override fields of ``opts``. Blow-up (unbounded
    growth or step-size underflow) is reported through ``termination``.
    """
    if opts is None:
        opts = IntegratorOptions(**kwargs)
    elif kwargs:
        opts = IntegratorOptions(**{**opts.__dict__, **kwargs})
    system = _mirror_system if opts.coordinates == "mirror" else _primal_system
    y, rhs, error_norm, accept, to_state = system(problem, opts)
    n = y.size
    grid = np.linspace(0.0, opts.t_max, opts.sample_count) if opts.t_max > 0 else np.zeros(1)
    x_scale = 1.0 + np.max(np.abs(problem.x0))

    samples_y = [y.copy()]
    k_first, norm = rhs(y)
    sample_norms = [norm]
    next_sample = 1
    seg_t, seg_h, seg_y, seg_q = [], [], [], []

    t = 0.0
    termination = "t_max_reached"
    steps = rejected = 0
    err_prev = 1e-4
    if norm == 0.0:
        # exact equilibrium: the solution is constant
        termination = "gradient_converged"
        samples_y += [y.copy()] * (grid.size - 1)
        sample_norms += [0.0] * (grid.size - 1)
        next_sample = grid.size
        t = opts.t_max
    else:
        scale = opts.atol + opts.rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((k_first / scale) ** 2))
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
        h = min(h, opts.t_max)

    K = np.empty((7, n))
    while t < opts.t_max and termination == "t_max_reached":
        if steps >= opts.max_steps:
            termination = "step_limit"
            break
        h = min(h, opts.t_max - t)
        if h < STEP_UNDERFLOW * max(1.0, t):
            termination = "blow_up_detected"
            break
        K[0] = k_first
        try:
            for s in range(1, 6):
                K[s], _ = rhs(y + h * (np.asarray(_A[s]) @ K[:s]))
            y_new = accept(y, h * (_B @ K[:6]))
            K[6], norm_new = rhs(y_new)
            err = error_norm(y, y_new, h * (_E @ K))
        except (BoundaryError, DegeneracyError, DomainError, _Rejected, FloatingPointError) as exc:
            logger.debug("step rejected at t=%g, h=%g: %s", t, h, exc)
            h *= 0.5
            rejected += 1
            continue
        if not np.isfinite(err) or err > 1.0:
            fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            h *= fac
            rejected += 1
            continue

        steps += 1
        Q = K.T @ _P
        seg_t.append(t)
        seg_h.append(h)
        seg_y.append(y.copy())
        seg_q.append(Q)
        t_new = t + h if t + h < opts.t_max else opts.t_max
        while next_sample < grid.size and grid[next_sample] <= t_new * (1 + 1e-14):
            tau = grid[next_sample]
            if tau >= t_new:
                y_s = y_new
            else:
                y_s = y + h * Q @ np.cumprod(np.full(4, (tau - t) / h))
            samples_y.append(y_s.copy())
            sample_norms.append(rhs(y_s)[1])
            next_sample += 1
        t, y, k_first = t_new, y_new, K[6].copy()

        x_now = to_state(y)
        if not np.all(np.isfinite(x_now)) or np.max(np.abs(x_now)) > opts.blow_up_factor * x_scale:
            termination = "blow_up_detected"
            break
        if norm_new < opts.stop_grad_tol:
            termination = "gradient_converged"
            break
        err = max(err, 1e-10)
        fac = 0.9 * err ** (-0.7 / 5) * err_prev ** (0.4 / 5)
        h *= min(5.0, max(0.2, fac))
        err_prev = err

    times = grid[: len(samples_y)]
    Y = np.array(samples_y)
    X = np.array([to_state(v) for v in Y])
    f_values = np.array([problem.f(x) for x in X])
    logger.info("integrate: %s at t=%g after %d steps (%d rejected)", termination, t, steps, rejected)
    segments = (
        np.array(seg_t),
        np.array(seg_h),
        np.array(seg_y).reshape(-1, n),
        np.array(seg_q).reshape(-1, n, 4),
    )
    return Trajectory(
        times=times,
        states=X,
        f_values=f_values,
        metric_grad_norms=np.array(sample_norms),
        termination=termination,
        t_final=float(t),
        n_steps=steps,
        n_rejected=rejected,
        mirror_states=Y if opts.coordinates == "mirror" else None,
        _segments=segments,
        _to_state=to_state,
    )


def time_derivative(times, values):
    """Fourth-order central differences on a uniform grid.

    Returns ``(index, derivative)`` for the interior samples 2..N-3.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 5:
        return np.arange(0), values[:0]
    dt = times[1] - times[0]
    if not np.allclose(np.diff(times), dt, rtol=1e-9, atol=0):
        raise ValueError("time_derivative requires a uniform grid")
    v = values
    d = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * dt)
    return np.arange(2, times.size - 2), d


def mirror_path(problem: Problem, traj: Trajectory) -> np.ndarray:
    """grad h(x(t_k)) for every sample."""
    if traj.mirror_states is not None:
        return traj.mirror_states
    return np.array([problem.geometry.grad_h(x) for x in traj.states])


def energy_identity_check(problem: Problem, traj: Trajectory) -> float:
    """Max normalised residual of d/dt f(x) + <H x', x'> = 0 on the grid."""
    idx, dfdt = time_derivative(traj.times, traj.f_values)
    if idx.size == 0:
        return 0.0
    power = traj.metric_grad_norms[idx] ** 2
    return float(np.max(np.abs(dfdt + power) / np.maximum(1.0, np.abs(dfdt))))


def lyapunov_check(problem: Problem, traj: Trajectory, a) -> tuple[bool, float]:
    """Is t -> D_h(a, x(t)) nonincreasing along the samples?"""
    geom = problem.geometry
    a = np.asarray(a, dtype=float)
    D = np.array([geom.bregman_h(a, x) for x in traj.states])
    max_increase = float(np.max(np.diff(D), initial=0.0))
    slack = 1e-9 * (1.0 + D[0])
    return bool(max_increase <= slack), max_increase


def value_gap_bound_check(problem: Problem, traj: Trajectory, a) -> float:
    """min over t > 0 of f(a) + D_h(a, x0)/t - f(x(t)); >= 0 certifies the bound."""
    a = np.asarray(a, dtype=float)
    D0 = problem.geometry.bregman_h(a, traj.x0)
    fa = problem.f(a)
    mask = traj.times > 0
    if not np.any(mask):
        return np.inf
    slack = fa + D0 / traj.times[mask] - traj.f_values[mask]
    return float(np.min(slack))


def inclusion_residual(problem: Problem, traj: Trajectory) -> float:
    """Max normalised Ker A component of d/dt grad h(x(t)) + grad f(x(t))."""
    Y = mirror_path(problem, traj)
    idx, dY = time_derivative(traj.times, Y)
    worst = 0.0
    for k, dy in zip(idx, dY):
        gf = problem.grad_f(traj.states[k])
        r = problem.project_kernel(dy + gf)
        worst = max(worst, float(np.linalg.norm(r) / (1.0 + np.linalg.norm(gf))))
    return worst


def monotone_values(traj: Trajectory, rtol: float | None = None) -> tuple[bool, float]:
    """Is f(x(t_k)) nonincreasing up to ``rtol (1 + |f(x0)|)``?"""
    rtol = 1e-8 if rtol is None else rtol
    inc = float(np.max(np.diff(traj.f_values), initial=0.0))
    return bool(inc <= rtol * (1.0 + abs(traj.f_values[0]))), inc


def rate_fit(traj: Trajectory, a, geom: Geometry, model: str, quantity: str = "bregman") -> RateEstimate:
    """Fit the decay of D_h(a, x(t)) (or |x(t) - a|) over the last half of samples.

    ``model="exponential"`` regresses the log of the quantity on t and
    reports the decay rate (positive for decay); ``model="power"`` regresses
    on ln t and reports the exponent (negative for decay).
    """
    if model not in ("exponential", "power"):
        raise ValueError(f"unknown model {model!r}")
    if quantity not in ("bregman", "euclidean"):
        raise ValueError(f"unknown quantity {quantity!r}")
    a = np.asarray(a, dtype=float)
    t_end = traj.times[-1]
    mask = (traj.times >= 0.5 * t_end) & (traj.times > 0)
    t = traj.times[mask]
    if quantity == "bregman":
        q = np.array([geom.bregman_h(a, x) for x in traj.states[mask]])
    else:
        q = np.linalg.norm(traj.states[mask] - a, axis=1)
    keep = q >= D_FLOOR
    t, q = t[keep], q[keep]
    if t.size < 3:
        raise ValueError("too few samples above the floating-point floor to fit a rate")
    abscissa = t if model == "exponential" else np.log(t)
    fit = stats.linregress(abscissa, np.log(q))
    rate = -fit.slope if model == "exponential" else fit.slope
    return RateEstimate(model, float(np.exp(fit.intercept)), float(rate), float(fit.rvalue**2))
