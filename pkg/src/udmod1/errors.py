"""Exception types shared across the package."""


class UdError(Exception):
    """Base class for package errors."""


class ConfigError(UdError):
    """Invalid model parameters or experiment configuration."""


class PrecisionError(UdError):
    """A computation was refused because its error certificate could not be met."""


class ResourceLimitError(PrecisionError):
    """A precision request exceeded the configured resource ceiling."""


class FlaggedBoundError(UdError):
    """A checked bound failed in a way that indicates a bug upstream."""
