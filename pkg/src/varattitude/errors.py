"""Exception types raised by the estimator library."""


class VarAttitudeError(Exception):
    """Base class for all library errors."""


class NotSkewSymmetric(VarAttitudeError, ValueError):
    pass


class Degenerate(VarAttitudeError, ValueError):
    pass


class DegenerateDirections(VarAttitudeError, ValueError):
    pass


class RankDeficient(VarAttitudeError, ValueError):
    pass


class EigensNotDistinct(VarAttitudeError, ValueError):
    pass


class NewtonDivergence(VarAttitudeError, RuntimeError):
    """Implicit angular-velocity solve did not reach tolerance."""

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class TimestampMismatch(VarAttitudeError, ValueError):
    pass


class ConfigError(VarAttitudeError, ValueError):
    """Scenario configuration failed validation; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
