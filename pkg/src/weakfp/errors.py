"""Exception hierarchy shared by every stage of the pipeline."""


class WeakFPError(Exception):
    """Base class for all package errors."""


class SchemaError(WeakFPError, ValueError):
    """Input file does not follow the snapshot CSV layout."""


class ValidationError(WeakFPError, ValueError):
    """Values are present but violate a domain constraint."""


class OrderingError(ValidationError):
    """Snapshot times are not monotone."""


class IncompatibleError(WeakFPError, ValueError):
    """Datasets or grids that must agree do not."""


class InsufficientDataError(WeakFPError, ValueError):
    """Too few samples for the requested estimate."""


class NumericalError(WeakFPError, ArithmeticError):
    """Non-finite values or rank deficiency in a numerical stage."""
