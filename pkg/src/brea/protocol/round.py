"""One full round: share, verify, report distances, select, aggregate, update."""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from typing import Mapping

import numpy as np

from ..errors import BadParams, DecodeFailure, OutOfRange, OverflowViolation, RefusedSmallSet, RoundAbort
from ..quantize import check_overflow, dequantize_aggregate, quantize_model_with_preimage
from ..rng import Purpose, stream
from .config import RoundConfig
from .messages import SERVER, MessageKind, Network, Phase, RoundMessage
from .parties import Attack, ByzantineBehavior, ByzantineUser, Server, User


@dataclass
class RoundOutcome:
    round: int
    selected: list[int] = dc_field(default_factory=list)
    candidates: list[int] = dc_field(default_factory=list)
    excluded: list[int] = dc_field(default_factory=list)
    accusations: dict[int, list[int]] = dc_field(default_factory=dict)
    byzantine: list[int] = dc_field(default_factory=list)
    dropped: dict[int, str] = dc_field(default_factory=dict)
    refused: list[int] = dc_field(default_factory=list)
    distance_error_positions: list[int] = dc_field(default_factory=list)
    aggregate_error_positions: list[int] = dc_field(default_factory=list)
    abort_phase: str | None = None
    abort_reason: str | None = None
    abort_error: str | None = None
    message_counts: dict[str, int] = dc_field(default_factory=dict)
    timings_ms: dict[str, float] = dc_field(default_factory=dict)
    # simulator-side values, not serialized
    aggregate: np.ndarray | None = dc_field(default=None, repr=False)
    update: np.ndarray | None = dc_field(default=None, repr=False)
    new_model: np.ndarray | None = dc_field(default=None, repr=False)
    quantized: dict[int, np.ndarray] = dc_field(default_factory=dict, repr=False)
    preimages: dict[int, np.ndarray] = dc_field(default_factory=dict, repr=False)
    distances: object = dc_field(default=None, repr=False)
    selection: object = dc_field(default=None, repr=False)

    @property
    def aborted(self) -> bool:
        return self.abort_phase is not None

    @property
    def error_positions(self) -> list[int]:
        return sorted(set(self.distance_error_positions) | set(self.aggregate_error_positions))

    @property
    def total_messages(self) -> int:
        return sum(self.message_counts.values())

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "selected": list(self.selected),
            "candidates": list(self.candidates),
            "excluded": list(self.excluded),
            "accusations": {str(k): v for k, v in sorted(self.accusations.items())},
            "byzantine": list(self.byzantine),
            "dropped": {str(k): v for k, v in sorted(self.dropped.items())},
            "refused": list(self.refused),
            "distance_error_positions": list(self.distance_error_positions),
            "aggregate_error_positions": list(self.aggregate_error_positions),
            "abort_phase": self.abort_phase,
            "abort_reason": self.abort_reason,
            "abort_error": self.abort_error,
            "message_counts": dict(self.message_counts),
        }


def _abort(outcome: RoundOutcome, phase: Phase, reason: str, error: Exception | None = None) -> RoundAbort:
    outcome.abort_phase = phase.name.lower()
    outcome.abort_reason = reason
    outcome.abort_error = type(error).__name__ if error is not None else None
    return RoundAbort(outcome.abort_phase, reason, outcome)


def run_round(global_model: np.ndarray, local_models: Mapping[int, np.ndarray], cfg: RoundConfig,
              lr: float, behaviors: Mapping[int, ByzantineBehavior | Attack] | None = None,
              dropouts: Mapping[int, Phase] | None = None, seed: int = 0, round_index: int = 0,
              overflow_check: bool = True) -> RoundOutcome:
    """Execute one round and return the updated model with diagnostics.

    ``local_models[u]`` is user u's real-valued local model (for honest users
    a gradient estimate).  ``dropouts[u]`` is the phase from which user u
    stops sending.  Raises RoundAbort, carrying the partial outcome, when a
    phase cannot complete.
    """
    behaviors = dict(behaviors or {})
    dropouts = dict(dropouts or {})
    if not cfg.allow_infeasible:
        if len(dropouts) > cfg.D:
            raise BadParams(f"{len(dropouts)} dropouts exceed D={cfg.D}")
        if len(behaviors) > cfg.A:
            raise BadParams(f"{len(behaviors)} Byzantine users exceed A={cfg.A}")
    global_model = np.asarray(global_model, dtype=np.float64)
    d = global_model.shape[0]
    outcome = RoundOutcome(round=round_index, byzantine=sorted(behaviors),
                           dropped={u: ph.name.lower() for u, ph in sorted(dropouts.items())})

    users: dict[int, User] = {}
    for u in cfg.users:
        b = behaviors.get(u)
        if b is None:
            users[u] = User(u, cfg)
        else:
            if isinstance(b, Attack):
                b = ByzantineBehavior(b, stream(seed, round_index, u, Purpose.ATTACK))
            users[u] = ByzantineUser(u, cfg, b)

    def active(u: int, phase: Phase) -> bool:
        return dropouts.get(u, Phase.UPDATE + 1) > phase

    net = Network(cfg.users)
    server = Server(cfg, stream(seed, round_index, SERVER, Purpose.DECODE))
    clock = time.perf_counter

    def finish_counts():
        outcome.message_counts = {k.value: v for k, v in sorted(net.counts.items(), key=lambda kv: kv[0].value)}

    # sharing and verification
    t0 = clock()
    net.open(Phase.SHARING)
    for u, user in users.items():
        if not active(u, Phase.SHARING):
            continue
        w = np.asarray(local_models[u], dtype=np.float64)
        if w.shape != (d,):
            raise BadParams(f"local model of user {u} has shape {w.shape}, expected ({d},)")
        try:
            secret, z = quantize_model_with_preimage(w, cfg.quant, stream(seed, round_index, u, Purpose.QUANT))
        except OutOfRange as exc:
            finish_counts()
            raise _abort(outcome, Phase.SHARING, f"user {u}: {exc}", exc) from exc
        for msg in user.share_phase(secret, stream(seed, round_index, u, Purpose.SHARES)):
            net.send(msg)
        outcome.quantized[u] = user.own_model
        outcome.preimages[u] = z
    honest_shared = {u: outcome.preimages[u] for u in outcome.preimages
                     if not (users[u].byzantine and Attack.POISON_MODEL in users[u].mode)}
    if overflow_check:
        try:
            check_overflow(honest_shared, cfg.quant, "distance")
        except OverflowViolation as exc:
            finish_counts()
            raise _abort(outcome, Phase.SHARING, str(exc), exc) from exc
    accusations: dict[int, set[int]] = {}
    for u, user in users.items():
        if active(u, Phase.SHARING):
            user.receive_sharing(net)
            accusations[u] = user.verify_phase()
    outcome.timings_ms["sharing"] = (clock() - t0) * 1e3

    # distance reports
    t0 = clock()
    net.open(Phase.DISTANCE)
    for u, user in users.items():
        if active(u, Phase.DISTANCE):
            net.send(user.distance_phase(accusations.get(u, set())))
    outcome.timings_ms["distance"] = (clock() - t0) * 1e3

    # selection
    t0 = clock()
    try:
        sel_msg = server.select_phase(net)
    except DecodeFailure as exc:
        finish_counts()
        raise _abort(outcome, Phase.SELECTION, f"distance decoding failed for pair {exc.tag}: {exc}", exc) from exc
    except BadParams as exc:
        finish_counts()
        raise _abort(outcome, Phase.SELECTION, str(exc), exc) from exc
    finally:
        outcome.excluded = sorted(server.excluded)
        outcome.accusations = {k: sorted(v) for k, v in sorted(server.accusations.items())}
        outcome.candidates = list(server.candidates)
        outcome.distance_error_positions = sorted(server.distance_errors)
    outcome.distances = server.distances
    outcome.selection = server.selection
    outcome.selected = list(server.selection.selected)
    net.open(Phase.SELECTION)
    net.send(sel_msg)
    for u, user in users.items():
        if active(u, Phase.SELECTION):
            user.receive_selection(net)
    outcome.timings_ms["selection"] = (clock() - t0) * 1e3

    # aggregation
    t0 = clock()
    if overflow_check:
        chosen = {u: honest_shared[u] for u in outcome.selected if u in honest_shared}
        try:
            check_overflow(chosen, cfg.quant, "aggregate")
        except OverflowViolation as exc:
            finish_counts()
            raise _abort(outcome, Phase.AGGREGATION, str(exc), exc) from exc
    net.open(Phase.AGGREGATION)
    for u, user in users.items():
        if not active(u, Phase.AGGREGATION):
            continue
        try:
            msg = user.aggregate_phase()
        except RefusedSmallSet:
            outcome.refused.append(u)
            continue
        if msg is not None:
            net.send(msg)
    try:
        aggregate = server.aggregate_phase(net, d)
    except DecodeFailure as exc:
        finish_counts()
        outcome.aggregate_error_positions = sorted(server.aggregate_errors)
        raise _abort(outcome, Phase.AGGREGATION, f"aggregate decoding failed: {exc}", exc) from exc
    outcome.aggregate_error_positions = sorted(server.aggregate_errors)
    outcome.timings_ms["aggregation"] = (clock() - t0) * 1e3

    # update
    outcome.aggregate = aggregate
    outcome.update = dequantize_aggregate(aggregate, cfg.quant)
    outcome.new_model = global_model - lr * outcome.update
    finish_counts()
    return outcome
