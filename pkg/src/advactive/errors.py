"""Exception hierarchy shared by all modules."""


class AdvActiveError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(AdvActiveError, ValueError):
    """Invalid dataset, strategy, attack or experiment settings."""


class ValidationError(AdvActiveError, ValueError):
    """Malformed numeric input (dimension mismatch, non-finite values, empty sets)."""


class IdxParseError(AdvActiveError, ValueError):
    """Malformed IDX payload. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingError(AdvActiveError):
    """The SVM could not be trained on the given samples."""


class SelectionError(AdvActiveError):
    """A selection strategy was asked to choose from an empty pool."""


class OracleError(AdvActiveError):
    """The labeling oracle could not be built or queried."""


class ExperimentError(AdvActiveError):
    """A trial failed; partial results may have been written."""
