"""Exception hierarchy shared by all modules."""


class FracSchrodError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FracSchrodError, ValueError):
    """Raised when inputs are invalid before any computation starts."""


class NumericalError(FracSchrodError, RuntimeError):
    """Raised when a computation cannot deliver a trustworthy result.

    ``module`` names the stage that failed and ``diagnostic`` carries the
    quantity that triggered the failure (an eigenvalue, an iteration
    count, an offending index pair, ...).
    """

    def __init__(self, msg, module=None, diagnostic=None):
        super().__init__(msg)
        self.module = module
        self.diagnostic = diagnostic


class AssemblyError(NumericalError):
    """Raised when a discrete form cannot be assembled to tolerance."""


class NotSubcriticalError(NumericalError):
    """Raised when a potential has relative form bound >= 1."""
