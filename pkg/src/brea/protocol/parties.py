"""Honest users, Byzantine users and the server.

An honest user's state holds its own model, the shares and commitments it
received, and broadcasts.  Nothing else about other users is ever visible
to it; the server sees distance reports, aggregate shares and traffic
metadata only.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Flag, auto
from itertools import combinations

import numpy as np

from ..errors import RefusedSmallSet
from ..rscode import decode_batch
from ..selection import DistanceMatrix, SelectionResult, decode_all_distances, multi_krum
from ..vss import CommitmentVector, gen_commitments, gen_shares, verify_from_many
from .config import RoundConfig
from .messages import SERVER, DistanceReport, MessageKind, Network, RoundMessage


class Attack(Flag):
    NONE = 0
    POISON_MODEL = auto()
    INVALID_SHARES = auto()
    CORRUPT_DISTANCES = auto()
    CORRUPT_AGGREGATES = auto()
    FALSE_ACCUSATIONS = auto()
    PROTOCOL = INVALID_SHARES | CORRUPT_DISTANCES | CORRUPT_AGGREGATES
    ALL = POISON_MODEL | INVALID_SHARES | CORRUPT_DISTANCES | CORRUPT_AGGREGATES | FALSE_ACCUSATIONS

    @classmethod
    def parse(cls, text: str) -> "Attack":
        """``"poison"``, ``"all"``, or a ``+``/``,``-separated list of member names."""
        aliases = {"poison": "POISON_MODEL", "invalid": "INVALID_SHARES",
                   "distances": "CORRUPT_DISTANCES", "aggregates": "CORRUPT_AGGREGATES",
                   "accuse": "FALSE_ACCUSATIONS", "none": "NONE"}
        mode = cls.NONE
        for part in text.replace(",", "+").split("+"):
            name = part.strip()
            if not name:
                continue
            key = aliases.get(name.lower(), name.upper())
            try:
                mode |= cls[key]
            except KeyError:
                raise ValueError(f"unknown attack {name!r}") from None
        return mode


@dataclass
class ByzantineBehavior:
    mode: Attack
    rng: np.random.Generator


class User:
    """Honest participant following every step of the round."""

    byzantine = False

    def __init__(self, uid: int, cfg: RoundConfig):
        self.uid = uid
        self.cfg = cfg
        self.theta = cfg.points.theta(uid)
        self.own_model: np.ndarray | None = None
        self.shares: dict[int, np.ndarray] = {}
        self.commitments: dict[int, CommitmentVector] = {}
        self.verdicts: dict[int, bool] = {}
        self.selected: tuple[int, ...] | None = None

    # phase 1 ---------------------------------------------------------------

    def share_phase(self, secret: np.ndarray, rng: np.random.Generator) -> list[RoundMessage]:
        self.own_model = secret
        poly, shares = gen_shares(secret, self.cfg.T, self.cfg.points, self.cfg.field, rng, self.uid)
        commits = gen_commitments(poly, self.cfg.grp, self.uid)
        msgs = [RoundMessage(MessageKind.SHARE, self.uid, s.to_user, s.value) for s in shares]
        msgs.append(RoundMessage(MessageKind.COMMIT_BROADCAST, self.uid, None, commits))
        return msgs

    def receive_sharing(self, net: Network) -> None:
        for msg in net.receive(self.uid, MessageKind.SHARE):
            self.shares[msg.sender] = msg.payload
        for msg in net.receive(self.uid, MessageKind.COMMIT_BROADCAST):
            self.commitments[msg.sender] = msg.payload

    def verify_phase(self) -> set[int]:
        """Check every received share against its sender's commitments; return the accused."""
        senders = sorted(set(self.shares) | set(self.commitments))
        d = None if self.own_model is None else len(self.own_model)
        checkable = []
        for s in senders:
            share, com = self.shares.get(s), self.commitments.get(s)
            ok_shape = (share is not None and com is not None
                        and com.commits.shape == (self.cfg.T + 1, len(share))
                        and (d is None or len(share) == d))
            if ok_shape:
                checkable.append(s)
            else:
                self.verdicts[s] = False
        if checkable:
            values = np.stack([self.shares[s] for s in checkable])
            commits = np.stack([self.commitments[s].commits for s in checkable])
            ok = verify_from_many(values, commits, self.theta, self.cfg.grp)
            for s, good in zip(checkable, ok):
                self.verdicts[s] = bool(good)
        return {s for s, good in self.verdicts.items() if not good}

    # phase 2 ---------------------------------------------------------------

    @property
    def valid_senders(self) -> list[int]:
        return sorted(s for s, good in self.verdicts.items() if good)

    def distance_phase(self, accusations: set[int]) -> RoundMessage:
        """Squared distances between the shares of every pair of accepted senders."""
        valid = self.valid_senders
        distances: dict[tuple[int, int], int] = {}
        if len(valid) >= 2:
            mat = self.cfg.field.pairwise_sq_dists(np.stack([self.shares[s] for s in valid]))
            for a, b in combinations(range(len(valid)), 2):
                distances[(valid[a], valid[b])] = int(mat[a, b])
        report = DistanceReport(distances, frozenset(accusations))
        return RoundMessage(MessageKind.DISTANCE_REPORT, self.uid, SERVER, report)

    # phase 3 ---------------------------------------------------------------

    def receive_selection(self, net: Network) -> None:
        msgs = net.receive(self.uid, MessageKind.SELECTED_SET_BROADCAST)
        self.selected = tuple(msgs[-1].payload) if msgs else None

    def aggregate_phase(self) -> RoundMessage | None:
        """Sum of the shares held for the selected users.

        Raises RefusedSmallSet when the announced set does not have exactly m
        members; returns None when a selected sender's share was rejected.
        """
        sel = self.selected
        if sel is None or len(sel) != self.cfg.m or len(set(sel)) != len(sel):
            raise RefusedSmallSet(f"user {self.uid} refuses a selected set of size "
                                  f"{0 if sel is None else len(sel)} (m={self.cfg.m})")
        if any(not self.verdicts.get(j, False) for j in sel):
            return None
        total = self.cfg.field.vsum(np.stack([self.shares[j] for j in sel]), axis=0)
        return RoundMessage(MessageKind.AGGREGATE_SHARE, self.uid, SERVER, total)


class ByzantineUser(User):
    """Deviates from the protocol according to ``behavior.mode``."""

    byzantine = True

    def __init__(self, uid: int, cfg: RoundConfig, behavior: ByzantineBehavior):
        super().__init__(uid, cfg)
        self.behavior = behavior

    @property
    def mode(self) -> Attack:
        return self.behavior.mode

    def _noise(self, shape):
        return self.cfg.field.random(self.behavior.rng, shape)

    def share_phase(self, secret, rng):
        if Attack.POISON_MODEL in self.mode:
            secret = self._noise(len(secret))
        msgs = super().share_phase(secret, rng)
        if Attack.INVALID_SHARES in self.mode:
            msgs = [RoundMessage(m.kind, m.sender, m.receiver, self._noise(len(m.payload)))
                    if m.kind is MessageKind.SHARE and m.receiver != self.uid else m
                    for m in msgs]
        return msgs

    def verify_phase(self):
        accused = super().verify_phase()
        if Attack.FALSE_ACCUSATIONS in self.mode:
            accused = set(self.commitments) - {self.uid}
        return accused

    def distance_phase(self, accusations):
        msg = super().distance_phase(accusations)
        if Attack.CORRUPT_DISTANCES not in self.mode:
            return msg
        valid = sorted(self.shares)
        pairs = list(combinations(valid, 2))
        noise = self._noise(len(pairs))
        report = DistanceReport({pr: int(v) for pr, v in zip(pairs, noise)}, msg.payload.accusations)
        return RoundMessage(MessageKind.DISTANCE_REPORT, self.uid, SERVER, report)

    def aggregate_phase(self):
        d = len(self.own_model) if self.own_model is not None else 0
        if Attack.CORRUPT_AGGREGATES in self.mode:
            return RoundMessage(MessageKind.AGGREGATE_SHARE, self.uid, SERVER, self._noise(d))
        sel = self.selected or ()
        if all(j in self.shares for j in sel) and sel:
            total = self.cfg.field.vsum(np.stack([self.shares[j] for j in sel]), axis=0)
            return RoundMessage(MessageKind.AGGREGATE_SHARE, self.uid, SERVER, total)
        return RoundMessage(MessageKind.AGGREGATE_SHARE, self.uid, SERVER, self._noise(d))


class Server:
    """Collects reports, selects users and recovers the selected aggregate."""

    def __init__(self, cfg: RoundConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.accusations: dict[int, set[int]] = {}
        self.excluded: set[int] = set()
        self.candidates: list[int] = []
        self.distances: DistanceMatrix | None = None
        self.selection: SelectionResult | None = None
        self.distance_errors: set[int] = set()
        self.aggregate: np.ndarray | None = None
        self.aggregate_errors: set[int] = set()
        self.aggregate_reporters: list[int] = []

    def select_phase(self, net: Network) -> RoundMessage:
        cfg = self.cfg
        reports = {m.sender: m.payload for m in net.receive(SERVER, MessageKind.DISTANCE_REPORT)}
        tally: Counter = Counter()
        self.accusations = {}
        for reporter, rep in reports.items():
            for accused in rep.accusations:
                if accused != reporter:
                    self.accusations.setdefault(accused, set()).add(reporter)
                    tally[accused] += 1
        # more than A accusers means at least one honest accuser
        self.excluded = {u for u, n in tally.items() if n > cfg.A}
        sharers = net.observed_senders(MessageKind.SHARE)
        self.candidates = sorted((sharers - self.excluded) & set(reports))
        self.distances, self.distance_errors = decode_all_distances(
            {r: rep.distances for r, rep in reports.items()}, self.candidates, cfg.thetas,
            cfg.T, cfg.quant, rng=self.rng)
        a_eff = max(0, cfg.A - len(self.excluded))
        self.selection = multi_krum(self.distances, a_eff, cfg.m, N=cfg.N)
        return RoundMessage(MessageKind.SELECTED_SET_BROADCAST, SERVER, None,
                            tuple(self.selection.selected))

    def aggregate_phase(self, net: Network, d: int) -> np.ndarray:
        """Decode ``sum_{j in S} w_bar_j`` (length ``d``) from the users' aggregate shares."""
        cfg = self.cfg
        msgs = net.receive(SERVER, MessageKind.AGGREGATE_SHARE)
        users = list(cfg.users)
        vals = cfg.field.zeros((len(users), d))
        present = np.zeros(len(users), dtype=bool)
        row = {u: i for i, u in enumerate(users)}
        for m in msgs:
            if len(m.payload) != d:
                continue
            vals[row[m.sender]] = cfg.field.vector(m.payload)
            present[row[m.sender]] = True
        self.aggregate_reporters = [u for u in users if present[row[u]]]
        dec = decode_batch([cfg.thetas[u] for u in users], vals, present, cfg.T, cfg.field,
                           rng=self.rng)
        by_theta = {cfg.thetas[u]: u for u in users}
        self.aggregate_errors = {by_theta[t] for t in dec.error_positions}
        self.aggregate = dec.secrets
        return self.aggregate
