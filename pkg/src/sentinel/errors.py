"""Exception types shared across the package."""


class SentinelError(Exception):
    """Base class for all package errors."""


class ConfigError(SentinelError):
    """Invalid configuration value (bad margin, port clash, missing source)."""


class TrainingError(SentinelError):
    """Training diverged; carries the epoch at which it happened."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class AlignmentError(SentinelError):
    """Face crop has no usable intersection with the frame."""


class RegistryParseError(SentinelError):
    """Registry file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int, record_id: str | None = None):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.record_id = record_id


class NotFoundError(SentinelError):
    """Referenced identity id does not exist."""


class DuplicateNameError(SentinelError):
    """Display name already enrolled; names are operator-facing keys."""


class ProtocolError(SentinelError):
    """Malformed or oversize wire message."""
