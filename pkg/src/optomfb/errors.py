"""Exception types raised by the optomfb package."""


class OptomfbError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(OptomfbError):
    """Invalid or inconsistent run configuration.

    Carries the dotted path of the offending field when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NonConvergenceError(OptomfbError):
    """Fixed-point iteration for the classical steady state did not converge."""


class EigenFailureError(OptomfbError):
    """The eigenvalue solver failed on a drift matrix."""


class SingularMatrixError(OptomfbError):
    """iw*I + A is singular at the requested frequency."""


class UnstableModelError(OptomfbError):
    """Operation requires a stable drift matrix but the model is unstable."""


class ToleranceNotMetError(OptomfbError):
    """Adaptive quadrature stalled before reaching the requested tolerance."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class NonPhysicalError(OptomfbError):
    """Covariance matrix violates the uncertainty relation beyond tolerance."""


class SingularBlockError(OptomfbError):
    """Conditioning block of a covariance matrix is singular."""


class NonPositiveGammaError(OptomfbError):
    """Teleportation fidelity kernel has non-positive determinant."""


class NoStableRegionError(OptomfbError):
    """Gain optimization found no stable point inside the search bounds."""
