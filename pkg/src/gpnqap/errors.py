"""Exception types raised across the package."""


class GpnError(Exception):
    """Base class for all package errors."""


# -- parsing / instance data -------------------------------------------------

class ParseError(GpnError, ValueError):
    """Input text could not be turned into an instance.

    ``line`` is the 1-based line number of the offending token when known.
    """

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnknownFormat(ParseError):
    pass


class DimensionMismatch(ParseError):
    pass


class MalformedHeader(ParseError):
    pass


class MalformedNumber(ParseError):
    pass


class InvalidInstance(GpnError, ValueError):
    pass


# -- numerics ----------------------------------------------------------------

class ShapeMismatch(GpnError, ValueError):
    pass


class NonFiniteValue(GpnError, FloatingPointError):
    pass


class AllMasked(GpnError, ValueError):
    pass


class NotScalar(GpnError, ValueError):
    pass


class TapeConsumed(GpnError, RuntimeError):
    pass


# -- solutions ---------------------------------------------------------------

class NotAPermutation(GpnError, ValueError):
    pass


class NonPositiveBest(GpnError, ValueError):
    pass


class TooLarge(GpnError, ValueError):
    pass


class IndexOutOfRange(GpnError, IndexError):
    pass


# -- checkpoints -------------------------------------------------------------

class CheckpointError(GpnError, IOError):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass
