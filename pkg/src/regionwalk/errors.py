"""Exception taxonomy.

Every exception carries the process exit code the CLI maps it to:
2 usage/configuration, 3 I/O, 4 file format, 5 numeric failure.
"""

from __future__ import annotations


class RegionWalkError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(RegionWalkError):
    """Bad command line or programmatic call."""

    exit_code = 2


class ConfigError(UsageError):
    """Configuration value out of range, unknown key, or inconsistent setup."""


class FormatError(RegionWalkError):
    """A file does not match its declared binary or text layout."""

    exit_code = 4


class PayloadLengthError(FormatError):
    """Payload shorter or longer than the header promises."""


class DataError(FormatError):
    """Payload parsed but contains invalid values (NaN/Inf, bad ids)."""


class VocabError(DataError):
    """Token id outside the vocabulary."""


class NumericError(RegionWalkError):
    """Base for runtime numeric failures."""

    exit_code = 5


class ShapeError(NumericError):
    """Operands have incompatible dimensions."""


class EmptyInputError(NumericError):
    """An operation received an empty operand."""


class DegenerateInputError(NumericError):
    """Input is numerically degenerate (zero norm, non-finite entries)."""


class SingularDegreeError(NumericError):
    """A graph vertex degree is too close to zero to normalize."""


class SymmetryError(NumericError):
    """A matrix required to be symmetric is not."""


class ConvergenceError(NumericError):
    """An iterative solver did not reach its tolerance."""


class EvaluationError(NumericError):
    """A user-supplied function returned a non-finite or non-scalar value."""


class StateError(NumericError):
    """An operation was called without the state it needs (e.g. no cache)."""


class GradCheckError(NumericError):
    """Analytic and numeric gradients disagree beyond tolerance."""
