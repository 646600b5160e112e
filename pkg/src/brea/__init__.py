"""Byzantine-resilient secure aggregation for federated learning, simulated end to end."""

from .errors import BreaError, DecodeFailure, OverflowViolation, RoundAbort
from .field import PROD_P, TEST_P, CommitGroup, PrimeField, commit_group_for
from .quantize import QuantConfig

__version__ = "0.1.0"

__all__ = [
    "BreaError",
    "CommitGroup",
    "DecodeFailure",
    "OverflowViolation",
    "PROD_P",
    "PrimeField",
    "QuantConfig",
    "RoundAbort",
    "TEST_P",
    "commit_group_for",
]
