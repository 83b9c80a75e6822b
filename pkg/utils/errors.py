"""Named error hierarchy shared by every module.

All errors derive from ``ValueError`` so callers that only know the generic
contract keep working; the CLI prints the class name of whatever it catches.
"""


class FutureBoostError(ValueError):
    """Base class for domain errors (CLI exit code 1)."""


# core_data
class GapInIndexError(FutureBoostError):
    pass


class InsufficientHistoryError(FutureBoostError):
    pass


# ingest
class UnparsableTimestampError(FutureBoostError):
    pass


class DuplicateTimestampError(FutureBoostError):
    pass


class ColumnCollisionError(FutureBoostError):
    pass


class EmptyTrainingRangeError(FutureBoostError):
    pass


class UnknownColumnError(FutureBoostError):
    pass


# forecast
class AllMissingContextError(FutureBoostError):
    pass


class AvailabilityViolationError(FutureBoostError):
    pass


class CorruptCacheEntryError(FutureBoostError):
    pass


class HorizonMismatchError(FutureBoostError):
    pass


class UnknownVariableError(FutureBoostError):
    pass


# factors
class MissingForecastError(FutureBoostError):
    pass


# gbdt / linreg
class EmptyDataError(FutureBoostError):
    pass


class FeatureMismatchError(FutureBoostError):
    pass


class MissingFeatureError(FutureBoostError):
    pass


class VersionMismatchError(FutureBoostError):
    pass


class ChecksumError(FutureBoostError):
    pass


class SingularSystemError(FutureBoostError):
    pass


# explain
class CoverInconsistencyError(FutureBoostError):
    pass


# eval
class EmptyInputError(FutureBoostError):
    pass


class ZeroBaselineError(FutureBoostError):
    pass


class InsufficientDataError(FutureBoostError):
    pass


class WindowError(FutureBoostError):
    """A module error raised while evaluating one protocol window."""

    def __init__(self, window_id, cause):
        self.window_id = window_id
        self.cause = cause
        super().__init__(f"window {window_id}: {type(cause).__name__}: {cause}")


# synthgen
class InvalidSpecError(FutureBoostError):
    pass


class SpecTableMismatchError(FutureBoostError):
    pass


# cli
class ConfigError(FutureBoostError):
    pass
