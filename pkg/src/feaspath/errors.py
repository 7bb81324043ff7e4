"""Exception hierarchy shared across the package.

The CLI maps each family to a distinct process exit code, so new errors
should subclass one of these rather than raising bare exceptions.
"""


class FeaspathError(Exception):
    """Base class for all package errors."""


class CaseParseError(FeaspathError):
    """Malformed case file (carries a line number when known)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseValidationError(FeaspathError):
    """Structurally valid file describing an unusable network."""


class UnsupportedCostError(FeaspathError):
    """Cost model outside the supported polynomial family."""


class PowerFlowError(FeaspathError):
    """Base class for power-flow solver failures."""


class DivergenceError(PowerFlowError):
    """Newton iteration failed to reach the mismatch tolerance."""


class SingularJacobianError(PowerFlowError):
    """Power-flow Jacobian is singular at the requested point."""


class SolverError(FeaspathError):
    """Conic solver failed in a way that is not an infeasibility report."""


class CertificationError(FeaspathError):
    """A claimed feasible path failed independent verification."""


class ConfigError(FeaspathError):
    """Inconsistent run configuration or objective setup."""
