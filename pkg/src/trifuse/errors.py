"""Exception types shared across the package."""


class TrifuseError(Exception):
    """Base class for all package errors."""


class ShapeError(TrifuseError):
    """An array has the wrong rank or an incompatible dimension."""


class ConfigError(TrifuseError):
    """A configuration value is invalid or inconsistent."""


class FormatError(TrifuseError):
    """A file on disk does not match the expected binary/text format."""


class ValidationError(TrifuseError):
    """Data is well-formed but violates a semantic constraint."""
