"""Exception hierarchy shared across the package."""


class CirFocusError(Exception):
    """Base class for all package-specific errors."""


class EmptyModality(CirFocusError):
    """A query is missing image segments or text tokens entirely."""


class NonPositiveArea(CirFocusError):
    """An image segment was supplied with area <= 0."""


class DimensionMismatch(CirFocusError):
    """Feature vectors with incompatible dimensions were combined."""


class PoolMismatch(CirFocusError):
    """Two rankings cover different candidate id sets."""


class TooManyTokens(CirFocusError):
    """The exhaustive enumerator was asked for more tokens than it supports."""


class DegenerateState(CirFocusError):
    """A pruning state preserves no token of either modality."""


class MissingPositive(CirFocusError):
    """A sample's candidate pool has no (or more than one) positive."""


class InsufficientNegatives(CirFocusError):
    """Fewer non-positive candidates than the requested draw size."""


class GenerationFailed(CirFocusError):
    """A generation-client capability failed.

    ``stage`` identifies which capability broke.
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class SourceExhausted(CirFocusError):
    """A mixed triplet source ran dry under stop-on-exhaustion policy."""


class DivergedLoss(CirFocusError):
    """The training loss became non-finite."""


class TransportError(CirFocusError):
    """The remote endpoint's byte stream failed (broken pipe, closed socket)."""


class ProtocolViolation(CirFocusError):
    """The remote endpoint replied with a malformed or inconsistent message."""


class ProtocolTimeout(TransportError):
    """The remote endpoint did not answer within the configured deadline."""
