"""Exception types shared across the package."""


class FluxscaleError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(FluxscaleError):
    """An input file does not match its declared schema (header or structure)."""


class RejectionRateError(FluxscaleError):
    """Row rejections exceeded the configured threshold during ingestion."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientPointsError(FluxscaleError):
    """Not enough usable points to perform the requested fit."""

    def __init__(self, message, usable=0):
        super().__init__(message)
        self.usable = usable


class DegenerateAbscissaError(FluxscaleError):
    """All regression abscissa values coincide; the slope is undefined."""


class MismatchError(FluxscaleError):
    """Two inputs that must describe the same instrument/grid do not."""


class EmptySeriesError(FluxscaleError):
    """An operation requiring at least one sample received none."""
