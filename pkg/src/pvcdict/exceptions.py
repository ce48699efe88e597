"""Exception hierarchy shared by all modules."""


class PvcDictError(Exception):
    """Base class for library errors."""


class UsageError(PvcDictError, ValueError):
    """Caller passed arguments that violate an operation's preconditions."""


class DomainError(PvcDictError, ValueError):
    """Input is well formed but outside the mathematical domain (e.g. zero-norm beat)."""


class DataError(PvcDictError):
    """Input data is missing, malformed or inconsistent."""


class DecodeError(DataError):
    """Malformed bitstream. ``offset`` is the bit position where decoding failed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (bit offset {offset})")
        self.offset = offset


class ConstraintError(PvcDictError):
    """A requested operating constraint cannot be met (e.g. sensitivity target)."""
