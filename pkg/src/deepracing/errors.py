"""Exception hierarchy for the DeepRacing testbed."""


class DeepRacingError(Exception):
    """Base class for all testbed errors."""


class InvalidArgumentError(DeepRacingError, ValueError):
    """A precondition on an argument was violated."""


class UnderdeterminedError(InvalidArgumentError):
    """Fewer samples than unknowns in a least-squares fit."""


class DegenerateDataError(InvalidArgumentError):
    """Regression input has no spread in the independent variable."""


class InsufficientDataError(InvalidArgumentError):
    """Not enough usable samples for an estimate."""


class OutOfRangeError(InvalidArgumentError):
    """Query lies outside the span covered by the data."""


class TrackFormatError(InvalidArgumentError):
    """Malformed DRTRACK file."""


class SimulationFaultError(DeepRacingError, RuntimeError):
    """The vehicle state became non-finite."""


class ControllerFault(DeepRacingError, RuntimeError):
    """A controller raised while computing a command."""


class ProtocolError(DeepRacingError):
    """Wire or file data does not follow the documented format."""


class TruncationError(ProtocolError):
    """Datagram or record has the wrong length."""


class UnsupportedVersionError(ProtocolError):
    """Format version is not understood by this implementation."""
