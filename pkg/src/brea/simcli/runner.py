"""Seeded experiment loop and metrics emission."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import trainer
from ..errors import BadParams, RoundAbort
from ..field import PrimeField
from ..protocol import Attack, RoundConfig
from ..quantize import QuantConfig
from ..rng import Purpose, stream
from .config import ExperimentConfig, config_warnings, validate_config

log = logging.getLogger(__name__)

CSV_COLUMNS = ("round", "scheme", "loss", "accuracy", "selected", "accusations", "errors_found", "ms")


@dataclass
class MetricsRow:
    round: int
    scheme: str
    loss: float
    accuracy: float
    selected: list[int] = field(default_factory=list)
    accusations: int = 0
    errors_found: list[int] = field(default_factory=list)
    ms: float = 0.0
    aborted: str | None = None

    def csv_fields(self) -> list[str]:
        errors = " ".join(map(str, self.errors_found))
        if self.aborted:
            errors = f"abort:{self.aborted}" + (f" {errors}" if errors else "")
        return [str(self.round), self.scheme, repr(float(self.loss)), repr(float(self.accuracy)),
                " ".join(map(str, self.selected)), str(self.accusations), errors, f"{self.ms:.3f}"]


@dataclass
class SchemeResult:
    scheme: str
    rows: list[MetricsRow]
    final_model: np.ndarray
    records: list[dict]

    @property
    def all_aborted(self) -> bool:
        return bool(self.rows) and all(r.aborted for r in self.rows)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    results: dict[str, SchemeResult]

    @property
    def rows(self) -> list[MetricsRow]:
        return [r for res in self.results.values() for r in res.rows]


class InvalidConfig(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def load_data(cfg: ExperimentConfig):
    """(train, test, partitions) for the configured dataset; deterministic in the seed."""
    if cfg.dataset == "gaussian":
        data = trainer.gaussian_mixture(cfg.n_samples, cfg.n_features, sep=cfg.class_sep,
                                        rng=stream(cfg.seed, Purpose.DATA, 0))
    else:
        data = trainer.load_csv(cfg.dataset)
    if cfg.input_scale != 1.0:
        data = data.scaled(cfg.input_scale)
    train, test = trainer.train_test_split(data, cfg.test_fraction, stream(cfg.seed, Purpose.DATA, 1))
    parts = trainer.partition(train, cfg.N, stream(cfg.seed, Purpose.DATA, 2))
    return train, test, parts


def byzantine_users(cfg: ExperimentConfig) -> list[int]:
    k = cfg.byzantine_count
    if cfg.placement == "random":
        rng = stream(cfg.seed, Purpose.PLACEMENT)
        return sorted(int(u) for u in rng.choice(np.arange(1, cfg.N + 1), size=k, replace=False))
    return list(range(1, k + 1))


def _run_scheme(scheme: str, cfg: ExperimentConfig, rcfg: RoundConfig, data) -> SchemeResult:
    train, test, parts = data
    d = train.dim
    sched = trainer.LrSchedule(cfg.lr_kind, cfg.lr0, cfg.lr_power)
    byz = byzantine_users(cfg)
    attack = cfg.attack
    adam = trainer.LocalAdam() if cfg.local_adam else None
    qcfg = QuantConfig(cfg.q, PrimeField(cfg.p))
    w = np.zeros(d)
    rows: list[MetricsRow] = []
    records: list[dict] = []
    for t in range(cfg.rounds):
        start = time.perf_counter()
        lr = sched(t)
        models = trainer.local_models(w, parts, cfg.batch_size, cfg.seed, t, adam)
        dropouts = cfg.dropouts_for(t)
        record: dict = {"scheme": scheme, "round": t, "lr": lr}
        row = MetricsRow(t, scheme, 0.0, 0.0)
        if scheme == "fedavg":
            if Attack.POISON_MODEL in attack:
                for u in byz:
                    models[u] = trainer.poison_vector(d, qcfg, stream(cfg.seed, t, u, Purpose.ATTACK))
            live = {u: g for u, g in models.items() if u not in dropouts}
            w, chosen = trainer.fedavg_round(w, live, min(cfg.m, len(live)), lr,
                                             stream(cfg.seed, t, Purpose.FEDAVG))
            row.selected = chosen
            record["selected"] = chosen
        else:
            behaviors = {u: attack for u in byz} if attack != Attack.NONE else {}
            try:
                out = trainer.brea_round(w, models, rcfg, lr, behaviors=behaviors, dropouts=dropouts,
                                         seed=cfg.seed, t=t, overflow_check=cfg.overflow_check)
                w = out.new_model
            except RoundAbort as exc:
                out = exc.outcome
                row.aborted = exc.phase
                log.warning("round %d aborted in %s: %s", t, exc.phase, exc.reason)
            if out is not None:
                row.selected = list(out.selected)
                row.accusations = len(out.excluded)
                row.errors_found = out.error_positions
                record.update(out.to_dict())
                if cfg.timing:
                    record["timings_ms"] = {k: round(v, 3) for k, v in out.timings_ms.items()}
        row.loss, _ = trainer.evaluate(w, train)
        _, row.accuracy = trainer.evaluate(w, test)
        if cfg.timing:
            row.ms = (time.perf_counter() - start) * 1e3
        record.update(loss=row.loss, accuracy=row.accuracy)
        rows.append(row)
        records.append(record)
    return SchemeResult(scheme, rows, w, records)


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run every requested scheme for ``cfg.rounds`` rounds; write outputs when ``out_dir`` is given."""
    problems = validate_config(cfg)
    if problems and not cfg.allow_infeasible:
        raise InvalidConfig(problems)
    for note in config_warnings(cfg) + [f"running infeasible config: {p}" for p in problems]:
        log.warning(note)
    try:
        rcfg = RoundConfig.create(cfg.N, cfg.A, cfg.D, cfg.T, cfg.m, q=cfg.q, p=cfg.p,
                                  allow_infeasible=cfg.allow_infeasible)
    except BadParams as exc:
        raise InvalidConfig([str(exc)]) from exc
    data = load_data(cfg)
    results = {s: _run_scheme(s, cfg, rcfg, data) for s in cfg.schemes}
    result = ExperimentResult(cfg, results)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def metrics_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(r.csv_fields())
    return buf.getvalue()


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(result.rows))
    records = [rec for res in result.results.values() for rec in res.records]
    (out / "outcome.json").write_text(json.dumps(records, indent=1, sort_keys=True) + "\n")
    (out / "config.resolved.json").write_text(json.dumps(result.config.to_dict(), indent=2, sort_keys=True) + "\n")
    return out


def sweep_q(cfg: ExperimentConfig, qs, out_dir: str | Path | None = None) -> dict[int, ExperimentResult]:
    """One run per quantization level, all sharing ``cfg.seed``."""
    results = {}
    for q in qs:
        sub = None if out_dir is None else Path(out_dir) / f"q{q}"
        results[int(q)] = run_experiment(replace(cfg, q=int(q)), sub)
    return results
