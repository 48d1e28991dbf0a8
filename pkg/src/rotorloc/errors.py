"""Exception types shared across the package."""


class RotorlocError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(RotorlocError):
    """A receiver coincides with a point source (distance below tolerance)."""


class OutsideEnvironment(RotorlocError):
    pass


class NotRectangular(RotorlocError):
    pass


class EmptyRegion(RotorlocError):
    pass


class UnknownPreset(RotorlocError, KeyError):
    pass


class TraceTooShort(RotorlocError):
    pass


class ShapeMismatch(RotorlocError):
    pass


class NonFiniteLoss(RotorlocError):
    """Training produced a NaN or infinite loss."""


class ZeroSignalPower(RotorlocError):
    """Relative noise requested for a signal with zero power."""


class ConfigError(RotorlocError, ValueError):
    """Malformed or unknown configuration keys."""


class NonConvergence(UserWarning):
    """Iteration cap reached before the tolerance; the best iterate is still returned."""

    def __init__(self, message, misfit=None):
        super().__init__(message)
        self.misfit = misfit
