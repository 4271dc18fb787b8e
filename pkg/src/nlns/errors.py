"""Exception hierarchy shared across the package.

Validation failures (bad config, bad arguments, contract violations) map
to CLI exit code 1; numerical failures during a run (non-finite values,
density underflow) map to exit code 2.
"""


class NlnsError(Exception):
    """Base class for all package errors."""


class ValidationError(NlnsError, ValueError):
    """Invalid input: configuration, parameters, or operation preconditions."""


class NumericalError(NlnsError, ArithmeticError):
    """Numerical failure at runtime: non-finite values, instability."""


class DensityFloorError(NumericalError):
    """Density dropped below the admissible floor during a step."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt
