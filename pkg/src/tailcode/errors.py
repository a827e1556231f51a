"""Exception hierarchy shared by every tailcode module."""


class TailcodeError(Exception):
    """Base class for all library errors."""


class NormalizationError(TailcodeError, ValueError):
    pass


class DuplicateSymbol(TailcodeError, ValueError):
    pass


class UnresolvedTail(TailcodeError, ValueError):
    """An operation needed probabilities hidden inside a residual tail."""


class EmptyTail(TailcodeError, ValueError):
    pass


class BadParameter(TailcodeError, ValueError):
    pass


class IndexOutOfRange(BadParameter):
    pass


class OffsetOutOfRange(BadParameter):
    pass


class BadRange(BadParameter):
    pass


class TooLarge(BadParameter):
    pass


class ParseError(TailcodeError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownConstruction(ParseError):
    pass


class GuardExceeded(TailcodeError, ValueError):
    """Exact enumeration would exceed the configured size guard."""


class BadInput(TailcodeError, ValueError):
    pass


class BadPartition(BadInput):
    pass


class LengthMismatch(BadInput):
    pass


class CorruptStream(TailcodeError, ValueError):
    pass


class VersionMismatch(CorruptStream):
    pass


class SymbolBeyondTruncation(TailcodeError, ValueError):
    pass


class NotConvergedWarning(RuntimeWarning):
    """A solver hit its iteration budget; the result carries its duality gap."""
