"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical failures with 3.
"""


class ParameterError(ValueError):
    """Invalid model, allocation, or configuration parameters."""


class UnsupportedModelError(ParameterError):
    """An analytic operation was asked for a model it does not support."""


class NumericalError(RuntimeError):
    """A numerical routine failed (non-finite values, no convergence, ...)."""
