"""Experiment configuration: JSON file, flag overrides, and feasibility validation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..field import PROD_P, is_prime
from ..protocol import Attack, Phase, threshold_violations

SCHEMES = ("fedavg", "brea", "both")


@dataclass
class Dropout:
    user: int
    phase: str = "aggregation"  # sharing | distance | selection | aggregation
    round: int | None = None  # None = every round

    @property
    def phase_enum(self) -> Phase:
        return Phase[self.phase.upper()]


@dataclass
class ExperimentConfig:
    N: int = 40
    A: int = 12
    D: int = 0
    T: int = 7
    m: int = 13
    q: int = 1024
    p: int = PROD_P
    rounds: int = 100
    seed: int = 0
    scheme: str = "both"
    adversary: str = "poison"
    n_byzantine: int | None = None  # defaults to A
    placement: str = "first"  # first | random
    dropouts: list[Dropout] = field(default_factory=list)
    lr_kind: str = "poly"
    lr0: float = 0.05
    lr_power: float = 0.6
    dataset: str = "gaussian"  # "gaussian" or a CSV path
    n_samples: int = 6000
    n_features: int = 32
    class_sep: float = 0.35
    input_scale: float = 1.0  # multiplies features and the bias input; see Dataset.scaled
    test_fraction: float = 0.2
    batch_size: int = 50
    local_adam: bool = False
    grad_bound: float = 1.0  # assumed |coordinate| bound for the q-headroom heuristic
    overflow_check: bool = True
    timing: bool = False
    allow_infeasible: bool = False

    @property
    def byzantine_count(self) -> int:
        return self.A if self.n_byzantine is None else self.n_byzantine

    @property
    def attack(self) -> Attack:
        return Attack.parse(self.adversary)

    @property
    def schemes(self) -> tuple[str, ...]:
        return ("fedavg", "brea") if self.scheme == "both" else (self.scheme,)

    def dropouts_for(self, t: int) -> dict[int, Phase]:
        return {d.user: d.phase_enum for d in self.dropouts if d.round is None or d.round == t}

    def model_dim(self) -> int | None:
        if self.dataset == "gaussian":
            return (self.n_features + 1) * 10
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        raw = dict(raw)
        raw["dropouts"] = [d if isinstance(d, Dropout) else Dropout(**d) for d in raw.get("dropouts", [])]
        return cls(**raw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Every violated requirement, each with the numbers involved; empty means valid."""
    out = threshold_violations(cfg.N, cfg.A, cfg.D, cfg.T, cfg.m)
    if not is_prime(cfg.p):
        out.append(f"p={cfg.p} is not prime")
    if cfg.N >= cfg.p:
        out.append(f"need N < p, got N={cfg.N}, p={cfg.p}")
    if cfg.q < 1:
        out.append(f"q >= 1: got q={cfg.q}")
    if cfg.rounds < 1:
        out.append(f"rounds >= 1: got {cfg.rounds}")
    if cfg.scheme not in SCHEMES:
        out.append(f"scheme must be one of {', '.join(SCHEMES)}: got {cfg.scheme!r}")
    try:
        cfg.attack
    except ValueError as exc:
        out.append(str(exc))
    if not 0 <= cfg.byzantine_count <= cfg.A:
        out.append(f"Byzantine users must number 0..A={cfg.A}: got {cfg.byzantine_count}")
    if cfg.placement not in ("first", "random"):
        out.append(f"placement must be 'first' or 'random': got {cfg.placement!r}")
    for d in cfg.dropouts:
        if not 1 <= d.user <= cfg.N:
            out.append(f"dropout user {d.user} outside 1..{cfg.N}")
        if d.phase.upper() not in Phase.__members__ or d.phase.upper() == "UPDATE":
            out.append(f"dropout phase {d.phase!r} is not sharing/distance/selection/aggregation")
    rounds = {d.round for d in cfg.dropouts}
    for r in rounds:
        n = sum(1 for d in cfg.dropouts if d.round is None or d.round == r)
        if n > cfg.D:
            label = "every round" if r is None else f"round {r}"
            out.append(f"{n} dropouts in {label} exceed D={cfg.D}")
    if cfg.lr_kind not in ("poly", "constant"):
        out.append(f"lr_kind must be 'poly' or 'constant': got {cfg.lr_kind!r}")
    if cfg.lr0 <= 0:
        out.append(f"lr0 > 0: got {cfg.lr0}")
    if not cfg.input_scale > 0:
        out.append(f"input_scale > 0: got {cfg.input_scale}")
    if cfg.batch_size < 1:
        out.append(f"batch_size >= 1: got {cfg.batch_size}")
    if cfg.dataset == "gaussian":
        per_user = int(cfg.n_samples * (1 - cfg.test_fraction)) // max(cfg.N, 1)
        if cfg.batch_size > per_user:
            out.append(f"batch_size {cfg.batch_size} exceeds the {per_user} training samples per user")
    elif not Path(cfg.dataset).is_file():
        out.append(f"dataset file not found: {cfg.dataset}")
    out.extend(headroom_violations(cfg))
    return out


def headroom_violations(cfg: ExperimentConfig) -> list[str]:
    """Heuristic: with coordinates bounded by ``grad_bound``, distances and sums must stay below (p-1)/2."""
    d = cfg.model_dim()
    if d is None or cfg.q < 1:
        return []
    half = (cfg.p - 1) // 2
    out = []
    qg = cfg.q * cfg.grad_bound
    dist = d * (2 * qg) ** 2
    if dist >= half:
        out.append(f"q headroom: q^2 * d * (2G)^2 = {dist:.4g} >= (p-1)/2 = {half} "
                   f"(d={d}, G={cfg.grad_bound})")
    agg = cfg.m * qg
    if agg >= half:
        out.append(f"q headroom: m * q * G = {agg:.4g} >= (p-1)/2 = {half}")
    return out


def config_warnings(cfg: ExperimentConfig) -> list[str]:
    notes = []
    if cfg.lr_kind == "constant":
        notes.append("constant learning rate: step sizes are not square-summable, convergence is not guaranteed")
    return notes
