"""Exception types shared across the package."""


class RaycalError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RaycalError, ValueError):
    pass


class SchemaError(RaycalError, ValueError):
    """Malformed input file. ``field`` names the offending key when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class EmptySystemError(RaycalError):
    """No usable measurement rows remain for calibration."""


class InsufficientDataError(RaycalError, ValueError):
    pass


class EmptyProfileError(RaycalError, ValueError):
    pass
