class RiposteError(Exception):
    """Base class for protocol errors."""


class InvalidArgument(RiposteError, ValueError):
    """Caller passed a value outside an operation's domain."""


class DecodeError(RiposteError, ValueError):
    """Bytes or group elements that do not decode."""


class FrameError(DecodeError):
    """Malformed wire frame (bad magic, version, type or length)."""


class ProtocolViolation(RiposteError):
    """A peer deviated from the protocol (e.g. commitment opening mismatch)."""


class EpochClosed(RiposteError):
    """Update attempted on an epoch that no longer accepts writes."""


class NotValidated(RiposteError):
    """Update attempted with a key that has not passed audit or proof checks."""
