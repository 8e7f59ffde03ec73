"""Exception types shared across the package."""


class FleetplanError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FleetplanError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ModelError(FleetplanError):
    """A model object violates a structural assumption (e.g. a kernel with
    no progress toward absorption)."""


class TrainingError(FleetplanError):
    """Raised when a training run diverges.  Carries the last parameters
    that produced a finite loss, if any."""

    def __init__(self, message, last_good=None, diagnostics=None):
        super().__init__(message)
        self.last_good = last_good
        self.diagnostics = diagnostics
