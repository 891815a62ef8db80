"""Exception types shared across the package."""


class UwSurrogateError(Exception):
    """Base class for package errors."""


class InvalidInputError(UwSurrogateError, ValueError):
    """An argument violates an operation's preconditions."""


class NormalizationError(UwSurrogateError, ValueError):
    """A TVIR cannot be normalized (all-zero first snapshot)."""


class UsageError(UwSurrogateError, RuntimeError):
    """An API was called out of order, e.g. backward before forward."""


class TrainingDivergedError(UwSurrogateError, RuntimeError):
    """Training produced a non-finite loss."""


class ReplayWindowTooShortError(InvalidInputError):
    """Measured window is too short for trend/fast decomposition."""


class FormatError(UwSurrogateError, ValueError):
    """A binary container (UATV/UACK) is malformed."""
