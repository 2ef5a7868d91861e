"""Exception hierarchy.

Validation problems (bad input, bad config) derive from ``ValidationError``;
numerical breakdowns derive from ``NumericError``.  The CLI maps the former
to exit code 2 and everything else to exit code 3.
"""


class LefoError(Exception):
    pass


class ValidationError(LefoError, ValueError):
    pass


class NumericError(LefoError, ArithmeticError):
    pass


# trace_io
class MissingColumn(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"non-finite value in data row {row}")


class NonMonotoneTime(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class InvalidCount(ValidationError):
    pass


class TooShortForSplit(ValidationError):
    pass


# predictor
class InsufficientHistory(ValidationError):
    pass


class InvalidDims(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class CacheMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class WrongWindowLength(ValidationError):
    pass


# info_metrics
class NonPositiveArgument(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class DegenerateData(NumericError):
    pass


# lefo_game
class NonFiniteLoss(NumericError):
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite training loss at iteration {iteration}")


# bound_analysis
class LengthMismatch(ValidationError):
    pass


class ZeroDirection(ValidationError):
    pass


class NoConvergence(NumericError):
    """Power iteration ran out of budget; ``estimate`` holds the last value."""

    def __init__(self, estimate, iterations):
        self.estimate = estimate
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(last estimate {estimate!r})"
        )


# sim_harness
class TooFewTrials(ValidationError):
    pass


class IoFailure(LefoError, OSError):
    pass


class ConfigError(ValidationError):
    pass
