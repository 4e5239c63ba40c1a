"""Exception types shared across the package."""


class RaftsimError(Exception):
    """Base class for all package errors."""


class MeshError(RaftsimError):
    """Base class for mesh construction/validation failures."""


class MeshParseError(MeshError):
    """OFF file could not be parsed."""


class NonManifoldError(MeshError):
    """An edge is shared by more than two triangles."""


class OpenBoundaryError(MeshError):
    """An edge belongs to only one triangle (surface not closed)."""


class OrientationError(MeshError):
    """Triangle orientations cannot be made globally consistent."""


class CapacityError(RaftsimError):
    """Requested size exceeds an implementation cap."""


class SingularMatrixError(RaftsimError):
    """Direct solve hit a (numerically) zero pivot."""

    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"matrix singular to working precision at pivot {pivot_index}")


class NoConvergenceError(RaftsimError):
    """Iterative solver did not reach the requested tolerance.

    Carries the best iterate found so callers can inspect or reuse it.
    """

    def __init__(self, best_x, iterations, residual, message=None):
        self.best_x = best_x
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class ConfigError(RaftsimError):
    """Run configuration is invalid; message names the offending key."""


class NumericalError(RaftsimError):
    """Time stepping produced a non-finite state or could not proceed."""
