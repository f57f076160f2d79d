"""Exception hierarchy shared by every volwriter module.

Each family maps onto one CLI exit code: configuration problems exit with 2,
data problems with 3 and numerical failures with 4.
"""


class VolwriterError(Exception):
    exit_code = 1


class ConfigError(VolwriterError, ValueError):
    exit_code = 2


class MarketDataError(VolwriterError):
    exit_code = 3


class MalformedRowError(MarketDataError):
    pass


class CrossedQuoteError(MarketDataError):
    pass


class UnsortedDataError(MarketDataError):
    pass


class StaleDataError(MarketDataError):
    pass


class MissingExpiryError(MarketDataError):
    pass


class InsufficientDataError(MarketDataError):
    pass


class NumericError(VolwriterError, ArithmeticError):
    exit_code = 4


class NoSolutionError(NumericError):
    pass


class DegenerateInputError(NumericError):
    pass


class GridError(NumericError):
    def __init__(self, message: str, suggested_n_points: int | None = None):
        super().__init__(message)
        self.suggested_n_points = suggested_n_points


class DegenerateSizeError(NumericError):
    pass
