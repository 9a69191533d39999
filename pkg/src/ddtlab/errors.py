"""Exception types shared across the package."""

from __future__ import annotations

import enum


class DDTLabError(Exception):
    """Base class for every error raised by ddtlab."""


class InvalidParameter(DDTLabError, ValueError):
    pass


class InvalidPayload(DDTLabError, ValueError):
    pass


class Unsupported(DDTLabError, ValueError):
    pass


class ProtocolOrderError(DDTLabError):
    """An operation was called in the wrong phase, role or pass."""


class InvalidState(DDTLabError):
    pass


class DecodeFailure(DDTLabError):
    pass


class IncompleteDelivery(DDTLabError):
    pass


class NoMaterial(DDTLabError):
    """The adversary has nothing recorded to replay."""


class InsufficientData(DDTLabError):
    pass


class AbortReason(str, enum.Enum):
    SIGNATURE_MISMATCH = "signature-mismatch"
    DECODE_FAILURE = "decode-failure"
    TIMEOUT = "timeout"


class SessionAborted(DDTLabError):
    """Raised after a session has been moved to the aborted phase."""

    def __init__(self, reason: AbortReason, message: str = "") -> None:
        self.reason = AbortReason(reason)
        super().__init__(message or self.reason.value)


class ConfigError(DDTLabError):
    """Scenario validation failure; ``path`` names the offending key."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EmitError(DDTLabError, OSError):
    pass
