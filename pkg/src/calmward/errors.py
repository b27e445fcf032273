"""Exception hierarchy shared across the package."""


class CalmwardError(Exception):
    """Base class for all package errors."""


class ConfigError(CalmwardError):
    """Invalid configuration value, file, or preset."""


class ValidationError(CalmwardError):
    """Malformed input data (questionnaire, wire message, log record)."""


class StreamOrderError(CalmwardError):
    """Sample timestamps are not strictly increasing."""


class InsufficientDataError(CalmwardError):
    """Not enough samples to evaluate the requested quantity."""


class ProtocolError(CalmwardError):
    """Wire-protocol message arrived out of order or malformed."""


class ReplayError(CalmwardError):
    """A session log failed replay verification."""

    def __init__(self, message: str, t_ms: float | None = None, line: int | None = None):
        super().__init__(message)
        self.t_ms = t_ms
        self.line = line
