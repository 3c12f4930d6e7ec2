"""Exception hierarchy shared by the harvesting and analysis modules."""


class CrossrefTrendsError(Exception):
    """Base class for every error raised by this package."""


# -- harvesting ---------------------------------------------------------------

class QueryRangeError(CrossrefTrendsError, ValueError):
    """A requested year lies outside the supported range."""


class ConfigError(CrossrefTrendsError):
    """Configuration is incomplete or inconsistent."""


class FetchError(CrossrefTrendsError):
    """A count request failed after all retry attempts.

    ``status`` holds the last HTTP status seen (``None`` for transport
    failures), ``year`` and ``category`` are filled in when the failure is
    propagated out of an annual loop, and ``fetched_years`` lists the years
    that had already succeeded.
    """

    def __init__(self, message, status=None, year=None, category=None, fetched_years=()):
        super().__init__(message)
        self.status = status
        self.year = year
        self.category = category
        self.fetched_years = tuple(fetched_years)


class ClientError(FetchError):
    """Non-retryable 4xx response (anything but 429)."""


class ResponseParseError(CrossrefTrendsError):
    """Response document lacks a usable ``message.total-results``."""


# -- data ---------------------------------------------------------------------

class SchemaError(CrossrefTrendsError):
    """CSV header does not match the expected columns."""


class ValidationError(CrossrefTrendsError, ValueError):
    """Data violates a series or dataset invariant."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DataIntegrityError(ValidationError):
    """A derived series would break an invariant (e.g. go negative)."""


class EmptyInputError(CrossrefTrendsError, ValueError):
    """An operation received no data to work on."""


# -- numerics -----------------------------------------------------------------

class DomainError(CrossrefTrendsError, ValueError):
    """Input lies outside the mathematical domain of a model."""


class DegenerateInputError(CrossrefTrendsError, ValueError):
    """Input carries too little information to identify the model."""


class UndefinedStatisticError(CrossrefTrendsError, ValueError):
    """A statistic is undefined for the given input (zero variance etc.)."""
