"""Exception types shared across the package.

Each class carries a short ``category`` used by the command line to print a
machine-parseable error line.
"""


class RegDbnError(Exception):
    category = "error"


class RejectedInputError(RegDbnError, ValueError):
    category = "rejected-input"


class DimensionError(RegDbnError, ValueError):
    category = "dimension"


class SchemaError(RegDbnError, ValueError):
    category = "schema"


class DivergenceError(RegDbnError, ArithmeticError):
    category = "divergence"

    def __init__(self, message, epoch=None, learning_rate=None):
        super().__init__(message)
        self.epoch = epoch
        self.learning_rate = learning_rate


class ConvergenceError(RegDbnError, RuntimeError):
    """Iterative fit ran out of iterations; ``last`` holds the final iterate."""

    category = "non-convergence"

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ExperimentError(RegDbnError, RuntimeError):
    category = "experiment"
