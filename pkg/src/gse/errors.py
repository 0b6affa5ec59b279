"""Typed errors shared across the package."""


class GseError(Exception):
    """Base class for package errors."""


class ConfigError(GseError, ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DomainError(GseError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DimensionError(GseError, ValueError):
    """Mismatched array shapes or lengths."""


class WavFormatError(GseError, ValueError):
    """Malformed or unsupported WAV payload."""


class DivergenceError(GseError, RuntimeError):
    """Non-finite state encountered during training or sampling (CLI exit code 3)."""
