"""Exception hierarchy.

Configuration problems (bad shapes, rank-deficient designs, invalid
parameters) and numerical/domain problems (degenerate first stage, diverging
shrinkage) are kept apart so callers, and the CLI exit codes, can tell them
apart.
"""


class CFShrinkError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CFShrinkError, ValueError):
    """Invalid parameters, dimensions or experiment configuration."""


class NumericalError(CFShrinkError, ArithmeticError):
    """A quantity is undefined or cannot be evaluated at the given input."""


class DomainError(NumericalError):
    """Input lies outside the range where a formula is proved or defined."""


class DegenerateFirstStageError(NumericalError):
    """The instrument block of the sample carries no signal (x_z = 0)."""


class EstimatorUndefinedError(NumericalError):
    """The control-function regression is rank deficient."""


class DivergenceError(EstimatorUndefinedError):
    """The shrinkage factor is exactly zero, where the estimator diverges."""
