"""Exception types shared across the toolkit."""


class QuantirError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(QuantirError, ValueError):
    """A configuration or argument violates its documented invariants."""


class DataError(QuantirError):
    """An input file is corrupt, truncated or inconsistent with its header.

    ``offset`` is the byte offset at which the problem was detected, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class RankDeficientError(QuantirError, ValueError):
    """The fringe-fit design matrix does not have full rank."""
