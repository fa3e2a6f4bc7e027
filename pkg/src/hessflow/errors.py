"""Exception hierarchy shared by every module."""


class HessFlowError(Exception):
    """Base class for all errors raised by hessflow."""


class DomainError(HessFlowError, ValueError):
    """An argument lies outside the domain of a kernel or Legendre function."""


class BoundaryError(DomainError):
    """A point is not strictly feasible for the constraints g_i(x) > 0.

    ``indices`` holds the (0-based) constraint indices with g_i(x) <= 0.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class DegeneracyError(HessFlowError, ValueError):
    """The Hessian (or a Schur complement) failed to factor as SPD."""


class UnsupportedError(HessFlowError, ValueError):
    """The operation is not defined for this kind of problem."""


class SubproblemError(HessFlowError, RuntimeError):
    """A Newton subproblem failed to converge.

    ``iterates`` holds the sequence of points visited, for post-mortem.
    """

    def __init__(self, message, iterates=()):
        super().__init__(message)
        self.iterates = list(iterates)


class ImageMembershipError(SubproblemError):
    """The inverse Legendre map did not converge; y is likely outside the image."""


class HorizonError(HessFlowError, ValueError):
    """A requested time lies beyond the integrated horizon."""


class SpecFileError(HessFlowError, ValueError):
    """Malformed or inconsistent problem specification file."""
