"""Exception types shared across the package."""


class PoleProximity(ArithmeticError):
    """A trajectory entered the coordinate singularity of the angle chart."""


class StabilityViolation(ValueError):
    """The requested time step exceeds the explicit-scheme stability bound."""


class NonConvergence(RuntimeError):
    """An iterative solver did not reach tolerance within its budget."""


class NoMatch(LookupError):
    """No grid eigenvalue lies within the error estimate of the target."""


class InsufficientSamples(ValueError):
    pass


class FitFailure(ValueError):
    pass


class InvalidState(ValueError):
    """A matrix is not a valid density matrix within tolerance."""


class ConfigError(ValueError):
    """Configuration rejected; carries the offending key and constraint."""

    def __init__(self, key, constraint):
        self.key = key
        self.constraint = constraint
        super().__init__(f"{key}: {constraint}")
