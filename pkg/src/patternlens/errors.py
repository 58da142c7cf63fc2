"""Exception hierarchy shared across the package.

Every error class maps onto one of five stable exit codes used by the
command line front end:

    1  configuration problems (bad flags, bad config files, missing patterns)
    2  data problems (malformed files, empty datasets, non-finite values)
    3  dimension problems (shape mismatches, index out of range)
    4  binding problems (pattern file fitted against a different model)
    5  numerical problems (singular systems, divergence, guard violations)
"""


class PatternLensError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PatternLensError):
    """Invalid configuration or missing prerequisite artifact."""

    exit_code = 1


class DataError(PatternLensError):
    """Malformed, inconsistent, or non-finite data."""

    exit_code = 2


class FormatError(DataError):
    """A binary file does not match its expected layout."""


class VersionError(DataError):
    """A binary file declares an unsupported format version."""


class ChecksumError(DataError):
    """A binary file fails its integrity check."""


class DimensionError(PatternLensError):
    """Shapes or indices do not satisfy an operation's contract."""

    exit_code = 3


class TraceError(DimensionError):
    """An activation trace does not match the model it is replayed against."""


class BindingError(PatternLensError):
    """Artifacts that must belong together (model and patterns) do not."""

    exit_code = 4


class NumericalError(PatternLensError):
    """A numerical computation cannot proceed or has gone bad."""

    exit_code = 5


class SingularMatrixError(NumericalError):
    """Normal equations are singular and no regularization was requested."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, message, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index
