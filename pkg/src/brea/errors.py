"""Exception types raised across the package."""

from __future__ import annotations


class BreaError(Exception):
    """Base class for all package errors."""


class NotPrime(BreaError, ValueError):
    pass


class ZeroInverse(BreaError, ZeroDivisionError):
    pass


class LengthMismatch(BreaError, ValueError):
    pass


class NoGroupFound(BreaError):
    pass


class OutOfRange(BreaError, ValueError):
    pass


class OverflowViolation(BreaError):
    """The field is too small for the quantized values being combined.

    ``where`` names the offending pair ``(j, k)`` in distance mode or the
    coordinate index in aggregate mode.
    """

    def __init__(self, message: str, mode: str, where, magnitude: int, limit: int):
        super().__init__(message)
        self.mode = mode
        self.where = where
        self.magnitude = magnitude
        self.limit = limit


class BadParams(BreaError, ValueError):
    pass


class DuplicatePoints(BreaError, ValueError):
    pass


# Same condition, named after the interpolation-side wording.
DuplicateTheta = DuplicatePoints


class DecodeFailure(BreaError):
    """No polynomial of the requested degree lies within the correction radius."""

    def __init__(self, message: str, present: int, agreements: int | None = None, tag=None):
        super().__init__(message)
        self.present = present
        self.agreements = agreements
        self.tag = tag


class RadiusViolated(DecodeFailure):
    """Too few present evaluations for the requested number of corrections."""


class RefusedSmallSet(BreaError):
    pass


class PhaseError(BreaError):
    """A message was delivered outside the phase that may consume it."""


class RoundAbort(BreaError):
    """A protocol round could not complete; ``phase`` names where it stopped."""

    def __init__(self, phase: str, reason: str, outcome=None):
        super().__init__(f"round aborted in {phase} phase: {reason}")
        self.phase = phase
        self.reason = reason
        self.outcome = outcome


class EmptyPartition(BreaError, ValueError):
    pass
