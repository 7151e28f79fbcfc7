"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SpikeLDAError(Exception):
    """Base class for all package errors."""


class ValidationError(SpikeLDAError, ValueError):
    """Malformed input: wrong shape, non-finite values, out-of-range arguments."""


class DomainError(SpikeLDAError, ValueError):
    """Input outside the mathematical domain of an operation (e.g. non-PD matrix)."""


class InsufficientDataError(SpikeLDAError, ValueError):
    """Too few samples in some class for the requested operation."""


class DegenerateError(SpikeLDAError, ArithmeticError):
    """Numerically degenerate situation: flat spectrum, rank-deficient alignment."""


class EmptySelectionError(SpikeLDAError):
    """A feature-selection rule retained no coordinates."""


class TuningError(SpikeLDAError):
    """Every tuning candidate failed."""


class ParseError(SpikeLDAError, ValueError):
    """A data file could not be parsed."""


class SchemaError(SpikeLDAError, ValueError):
    """A data or model file has an unexpected structure."""


class SplitError(SpikeLDAError, ValueError):
    """A train/test split emptied a class."""


class RunError(SpikeLDAError):
    """A Monte Carlo run had too many failed replicates."""
