"""Exception hierarchy shared by all modules."""


class FriError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(FriError, ValueError):
    """An acquisition or sampler configuration violates its invariants."""


class InvalidInputError(FriError, ValueError):
    """An input value is outside the domain of an operation."""


class DegenerateLocationsError(FriError, ValueError):
    """The least-squares design matrix is rank deficient.

    ``pair`` holds the indices of the two most collinear columns.
    """

    def __init__(self, message, pair=None, condition=None):
        super().__init__(message)
        self.pair = pair
        self.condition = condition


class LocationDomainError(FriError, ValueError):
    """A filter root cannot be mapped to a real location."""


class OverflowRiskError(FriError, OverflowError):
    """Exponential reweighting would overflow double precision."""


class RecordFormatError(FriError, ValueError):
    """A records or spec file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
