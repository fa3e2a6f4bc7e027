"""One-dimensional Legendre kernels.

Each kernel ``theta`` is a strictly convex function on (0, inf) whose
derivative blows up to -inf at 0+. A kernel generates the separable
Legendre function ``h(x) = sum_i theta(g_i(x))`` used by :mod:`hessflow.geometry`.

Catalogue (names as used in problem files)::

    log                -ln s
    inverse            1/s
    boltzmann_shannon  s ln s - s
    power              -s**gamma / gamma
    teboulle           (gamma s - s**gamma) / (1 - gamma)
    xlogx              s ln s
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DomainError

KERNEL_NAMES = ("log", "inverse", "boltzmann_shannon", "power", "teboulle", "xlogx")

_GAMMA_KERNELS = ("power", "teboulle")
_ZERO_FINITE = {"log": False, "inverse": False, "boltzmann_shannon": True,
                "power": True, "teboulle": True, "xlogx": True}


def _as_array(s):
    return np.asarray(s, dtype=float)


def _unwrap(out):
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LegendreKernel:
    """A catalogue kernel, optionally parametrised by ``gamma`` in (0, 1)."""

    name: str
    gamma: float | None = None

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise ValueError(f"unknown kernel {self.name!r}; expected one of {KERNEL_NAMES}")
        if self.name in _GAMMA_KERNELS:
            gamma = 0.5 if self.gamma is None else float(self.gamma)
            if not 0.0 < gamma < 1.0:
                raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
            object.__setattr__(self, "gamma", gamma)
        elif self.gamma is not None:
            raise ValueError(f"kernel {self.name!r} takes no gamma parameter")

    @property
    def zero_finite(self) -> bool:
        """True iff theta(0) < +inf (Bregman-type kernel)."""
        return _ZERO_FINITE[self.name]

    @property
    def eta(self) -> float:
        """lim theta'(s) as s -> +inf."""
        if self.name in ("boltzmann_shannon", "xlogx"):
            return np.inf
        if self.name == "teboulle":
            return self.gamma / (1.0 - self.gamma)
        return 0.0

    @property
    def nonincreasing(self) -> bool:
        """Whether theta is non-increasing on its domain."""
        return self.name in ("log", "inverse", "power")

    def _check(self, s, allow_zero=False):
        s = _as_array(s)
        bad = s < 0 if (allow_zero and self.zero_finite) else s <= 0
        if np.any(bad) or np.any(np.isnan(s)):
            raise DomainError(f"kernel {self.name!r} evaluated outside its domain: s={s}")
        return s

    def value(self, s):
        """theta(s); s = 0 is allowed for zero-finite kernels (analytic limit)."""
        s = self._check(s, allow_zero=True)
        g = self.gamma
        if self.name == "log":
            out = -np.log(s)
        elif self.name == "inverse":
            out = 1.0 / s
        elif self.name == "boltzmann_shannon":
            out = xlogy(s, s) - s
        elif self.name == "power":
            out = -s**g / g
        elif self.name == "teboulle":
            out = (g * s - s**g) / (1.0 - g)
        else:
            out = xlogy(s, s)
        return _unwrap(out)

    def first(self, s):
        s = self._check(s)
        g = self.gamma
        if self.name == "log":
            out = -1.0 / s
        elif self.name == "inverse":
            out = -1.0 / s**2
        elif self.name == "boltzmann_shannon":
            out = np.log(s)
        elif self.name == "power":
            out = -s ** (g - 1.0)
        elif self.name == "teboulle":
            out = g * (1.0 - s ** (g - 1.0)) / (1.0 - g)
        else:
            out = np.log(s) + 1.0
        return _unwrap(out)

    def second(self, s):
        s = self._check(s)
        g = self.gamma
        if self.name == "log":
            out = 1.0 / s**2
        elif self.name == "inverse":
            out = 2.0 / s**3
        elif self.name in ("boltzmann_shannon", "xlogx"):
            out = 1.0 / s
        elif self.name == "power":
            out = (1.0 - g) * s ** (g - 2.0)
        else:
            out = g * s ** (g - 2.0)
        return _unwrap(out)

    def inverse_second(self, s):
        """1 / theta''(s), extended continuously to s = 0 (where it vanishes).

        Used by the mirror-coordinate integrator, where states may underflow.
        """
        s = _as_array(s)
        if np.any(s < 0):
            raise DomainError(f"inverse_second needs s >= 0, got {s}")
        g = self.gamma
        if self.name == "log":
            out = s**2
        elif self.name == "inverse":
            out = 0.5 * s**3
        elif self.name in ("boltzmann_shannon", "xlogx"):
            out = s.copy() if s.ndim else s
        elif self.name == "power":
            out = s ** (2.0 - g) / (1.0 - g)
        else:
            out = s ** (2.0 - g) / g
        return _unwrap(out)

    def conjugate_grad(self, u):
        """(theta*)'(u) = (theta')^{-1}(u), defined for u < eta."""
        u = _as_array(u)
        if np.any(u >= self.eta) or np.any(np.isnan(u)):
            raise DomainError(f"u must be < eta={self.eta} for kernel {self.name!r}, got {u}")
        g = self.gamma
        if self.name == "log":
            out = -1.0 / u
        elif self.name == "inverse":
            out = np.sqrt(-1.0 / u)
        elif self.name == "boltzmann_shannon":
            out = np.exp(u)
        elif self.name == "power":
            out = (-u) ** (1.0 / (g - 1.0))
        elif self.name == "teboulle":
            out = (1.0 - u * (1.0 - g) / g) ** (1.0 / (g - 1.0))
        else:
            out = np.exp(u - 1.0)
        return _unwrap(out)

    def bregman(self, y, x):
        """Scalar D-function theta(y) - theta(x) - theta'(x)(y - x), elementwise."""
        x = self._check(x)
        y = self._check(y, allow_zero=True)
        g = self.gamma
        if self.name == "log":
            r = y / x
            out = r - 1.0 - np.log(r)
        elif self.name == "inverse":
            out = (x - y) ** 2 / (x**2 * y)
        elif self.name in ("boltzmann_shannon", "xlogx"):
            out = xlogy(y, y / x) - y + x
        elif self.name == "power":
            out = x**g * (1.0 / g - 1.0) + x ** (g - 1.0) * y - y**g / g
        else:
            out = (x**g - y**g + g * x ** (g - 1.0) * (y - x)) / (1.0 - g)
        out = np.where(y == x, 0.0, np.maximum(out, 0.0))
        return _unwrap(out)


def kernel_eval(kernel: LegendreKernel, s):
    """Return ``(theta(s), theta'(s), theta''(s))``."""
    return kernel.value(s), kernel.first(s), kernel.second(s)


def kernel_bregman(kernel: LegendreKernel, y, x):
    return kernel.bregman(y, x)


def kernel_conjugate_grad(kernel: LegendreKernel, u):
    return kernel.conjugate_grad(u)


def kernel_eta(kernel: LegendreKernel) -> float:
    return kernel.eta
