"""Exception hierarchy shared across the package.

``exit_code`` mirrors the CLI contract: 2 parse, 3 validation,
4 numeric failure, 5 I/O.
"""


class PabfitError(Exception):
    exit_code = 1


class ParseError(PabfitError):
    """Malformed input text (CSV cell, report JSON, option value)."""

    exit_code = 2


class ValidationError(PabfitError):
    """Structurally valid input that violates a domain constraint."""

    exit_code = 3


class InvalidInput(ValidationError):
    pass


class InvalidTime(ValidationError):
    pass


class InconsistentSample(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class NonPositiveConcentration(ValidationError):
    pass


class NumericError(PabfitError):
    """Failure inside a numerical routine."""

    exit_code = 4


class DimensionMismatch(NumericError):
    pass


class NotPositiveDefinite(NumericError):
    pass


class NonFiniteObjective(NumericError):
    pass


class DegenerateFit(NumericError):
    pass


class FileIOError(PabfitError):
    """Filesystem failure while reading inputs or writing outputs."""

    exit_code = 5
