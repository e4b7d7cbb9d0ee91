"""
Exception hierarchy shared by the compute modules and the CLI
"""


class FartError(Exception):
    """Base class for all expected failures"""
    exit_code = 1


# Usage / input errors (exit 2)

class InvalidInputError(FartError, ValueError):
    """Argument outside its documented domain"""
    exit_code = 2


class InvalidRangeError(InvalidInputError):
    pass


class InvalidSizeError(InvalidInputError):
    pass


class InvalidWeightsError(InvalidInputError):
    pass


# Data errors (exit 3)

class DataError(FartError):
    """Problem with an input file, dataset or archive"""
    exit_code = 3


class InsufficientDataError(DataError):
    pass


class UnreadableFileError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class ArchiveParseError(DataError):
    pass


class UnsupportedVersionError(DataError):
    pass


class ReportWriteError(DataError):
    pass


# Numeric / degenerate-model errors (exit 4)

class NumericError(FartError):
    """The fiducial computation cannot proceed on this fit"""
    exit_code = 4


class InvalidDofError(NumericError, ValueError):
    pass


class DegenerateFitError(NumericError):
    pass


class NoValidModelError(NumericError):
    pass
