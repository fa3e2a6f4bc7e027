"""Hessian-Riemannian gradient flows for constrained optimization."""

from .duality import DualTrajectory, dual_residuals, dual_trajectory
from .errors import (
    BoundaryError,
    DegeneracyError,
    DomainError,
    HessFlowError,
    HorizonError,
    ImageMembershipError,
    SpecFileError,
    SubproblemError,
    UnsupportedError,
)
from .flow import (
    IntegratorOptions,
    RateEstimate,
    Trajectory,
    energy_identity_check,
    inclusion_residual,
    integrate,
    lyapunov_check,
    rate_fit,
    value_gap_bound_check,
)
from .geometry import ConstraintFunction, Geometry
from .kernels import LegendreKernel
from .problem import FeasibilityReport, Objective, Problem
from .proximal import ProxSchedule, bregman_prox_step, prox_orbit_check, viscosity_point
from .transform import LtcMap, image_cone_report, ltc_forward, ltc_inverse, ltc_jacobian, straight_line_check

__version__ = "0.1.0"
