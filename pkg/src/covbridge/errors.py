"""Exception hierarchy shared by the solver, simulator and CLI."""


class BridgeError(Exception):
    """Base class for every error raised by covbridge."""

    code = "bridge-error"


class ParseError(BridgeError):
    """The problem file is not well-formed."""

    code = "parse-error"


class ValidationError(BridgeError, ValueError):
    code = "validation-error"


class NotSymmetricError(ValidationError):
    code = "not-symmetric"


class NotPSDError(ValidationError):
    code = "not-psd"


class ConfigError(ValidationError):
    code = "config-error"


class OutOfRangeError(ValidationError):
    code = "out-of-range"


class BasisMismatchError(ValidationError):
    code = "basis-mismatch"


class SingularGramianError(BridgeError):
    """The reachability/controllability Gramian is numerically singular."""

    code = "singular-gramian"


class SolverError(BridgeError):
    code = "solver-error"


class IntegrationError(SolverError):
    code = "integration-failure"


class NumericalFailure(SolverError):
    code = "numerical-failure"


class SingularCovarianceError(SolverError):
    code = "singular-covariance"


class EscapeTimeError(SolverError):
    """A Riccati/Lyapunov solution lost invertibility inside the interval."""

    code = "escape-time"

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ClipRequiredError(SolverError):
    code = "clip-required"
