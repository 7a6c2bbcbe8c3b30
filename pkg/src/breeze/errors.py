"""Exception types shared across the toolkit.

Everything raised on purpose derives from BreezeError so callers can
catch toolkit failures without swallowing programming errors.
"""


class BreezeError(Exception):
    pass


class ConflictingTraits(BreezeError):
    """Two traits try to set the same breathing parameter axis."""


class InvalidSpec(BreezeError):
    """A pattern spec violates its own invariants."""


class DegenerateSample(BreezeError):
    """IMU sample unusable, e.g. accelerometer norm ~ 0."""


class InsufficientData(BreezeError):
    """Not enough samples for the requested operation."""


class NoPeaks(BreezeError):
    """Peak detection found less than one full breathing cycle."""


class DegenerateSeries(BreezeError):
    """Correlation of a constant series is undefined."""


class InsufficientCycles(BreezeError):
    """Feature extraction needs at least two detected peaks."""


class OutOfRange(BreezeError):
    """Encoder input outside the normalized [0, 1] domain."""


# -- wire protocol --------------------------------------------------------


class WireError(BreezeError):
    pass


class BadMagic(WireError):
    """Frame does not start with the protocol magic."""


class UnknownType(WireError):
    """Frame type byte is not one of the defined types."""


class Truncated(WireError):
    """Buffer ends before the frame does; not fatal, wait for more bytes."""

    def __init__(self, needed: int, have: int):
        super().__init__(f"need {needed} bytes, have {have}")
        self.needed = needed
        self.have = have


class PayloadTooLarge(WireError):
    """Payload exceeds what the length field or frame rules allow."""


class HandshakeTimeout(WireError):
    """Peer did not complete the hello/ack exchange in time."""


class ProtocolViolation(WireError):
    """Frame sequence breaks session rules (ordering, unexpected type)."""
