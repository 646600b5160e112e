"""Message types and the in-process network that carries them between phases."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any

from ..errors import PhaseError

SERVER = 0


class Phase(IntEnum):
    SHARING = 1
    DISTANCE = 2
    SELECTION = 3
    AGGREGATION = 4
    UPDATE = 5


class MessageKind(Enum):
    SHARE = "share"
    COMMIT_BROADCAST = "commit_broadcast"
    DISTANCE_REPORT = "distance_report"
    SELECTED_SET_BROADCAST = "selected_set_broadcast"
    AGGREGATE_SHARE = "aggregate_share"
    GLOBAL_MODEL_BROADCAST = "global_model_broadcast"


KIND_PHASE = {
    MessageKind.SHARE: Phase.SHARING,
    MessageKind.COMMIT_BROADCAST: Phase.SHARING,
    MessageKind.DISTANCE_REPORT: Phase.DISTANCE,
    MessageKind.SELECTED_SET_BROADCAST: Phase.SELECTION,
    MessageKind.AGGREGATE_SHARE: Phase.AGGREGATION,
    MessageKind.GLOBAL_MODEL_BROADCAST: Phase.UPDATE,
}

# kinds that may only travel user -> user or user -> server
_USER_ONLY = {MessageKind.SHARE}
_TO_SERVER = {MessageKind.DISTANCE_REPORT, MessageKind.AGGREGATE_SHARE}
_FROM_SERVER = {MessageKind.SELECTED_SET_BROADCAST, MessageKind.GLOBAL_MODEL_BROADCAST}


@dataclass(frozen=True)
class RoundMessage:
    kind: MessageKind
    sender: int
    receiver: int | None  # None = broadcast
    payload: Any


@dataclass(frozen=True)
class DistanceReport:
    distances: dict[tuple[int, int], int]
    accusations: frozenset[int]


class Network:
    """Deterministic single-timeline message bus.

    Messages are accepted only during the phase their kind belongs to and are
    read back ordered by sender id.  Raw shares can never be addressed to the
    server.
    """

    def __init__(self, users):
        self.users = tuple(users)
        self.phase: Phase | None = None
        self._inbox: dict[int, list[RoundMessage]] = defaultdict(list)
        self.counts: Counter = Counter()
        self._senders: dict[MessageKind, set[int]] = defaultdict(set)

    def open(self, phase: Phase) -> None:
        if self.phase is not None and phase < self.phase:
            raise PhaseError(f"cannot move back from {self.phase.name} to {phase.name}")
        self.phase = phase

    def send(self, msg: RoundMessage) -> None:
        if KIND_PHASE[msg.kind] != self.phase:
            raise PhaseError(f"{msg.kind.value} message sent during {self.phase.name if self.phase else 'no'} phase")
        if msg.kind in _USER_ONLY and (msg.receiver in (SERVER, None)):
            raise PhaseError("raw shares may only be sent to a single user")
        if msg.kind in _TO_SERVER and msg.receiver != SERVER:
            raise PhaseError(f"{msg.kind.value} must be addressed to the server")
        if msg.kind in _FROM_SERVER and msg.sender != SERVER:
            raise PhaseError(f"{msg.kind.value} must come from the server")
        targets = [*self.users, SERVER] if msg.receiver is None else [msg.receiver]
        for t in targets:
            self._inbox[t].append(msg)
        self.counts[msg.kind] += 1
        self._senders[msg.kind].add(msg.sender)

    def receive(self, receiver: int, kind: MessageKind) -> list[RoundMessage]:
        """Messages of ``kind`` for ``receiver`` sent in the current phase, by sender id."""
        if KIND_PHASE[kind] != self.phase:
            raise PhaseError(f"cannot read {kind.value} messages during {self.phase.name}")
        return sorted((m for m in self._inbox[receiver] if m.kind is kind), key=lambda m: m.sender)

    def observed_senders(self, kind: MessageKind) -> set[int]:
        """Who sent messages of ``kind``; traffic metadata, not content."""
        return set(self._senders[kind])

    @property
    def total(self) -> int:
        return sum(self.counts.values())
