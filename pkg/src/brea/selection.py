"""Pairwise-distance recovery at the server and multi-Krum user selection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .errors import BadParams
from .field import PrimeField
from .quantize import QuantConfig, unmap_phi
from .rscode import decode_batch


@dataclass
class DistanceMatrix:
    """Symmetric matrix of squared distances indexed by user id.

    ``field_values`` keeps the decoded residues; ``values`` holds the real
    distances used for scoring.  A decoded residue whose signed value is
    negative can only come from wrap-around (a squared norm is never
    negative), so it is scored as ``inf``.
    """

    users: tuple[int, ...]
    values: np.ndarray
    field_values: np.ndarray | None = None

    def __post_init__(self):
        self._index = {u: i for i, u in enumerate(self.users)}

    @classmethod
    def from_field(cls, users: Sequence[int], residues: np.ndarray, cfg: QuantConfig) -> "DistanceMatrix":
        signed = np.asarray(unmap_phi(np.asarray(residues), cfg.field), dtype=np.float64)
        real = signed / float(cfg.q * cfg.q)
        real = np.where(signed < 0, np.inf, real)
        np.fill_diagonal(real, 0.0)
        return cls(tuple(users), real, np.asarray(residues))

    @classmethod
    def from_vectors(cls, vectors: Mapping[int, np.ndarray]) -> "DistanceMatrix":
        """Plaintext distances, used as an oracle and for scoring tests."""
        users = tuple(sorted(vectors))
        x = np.stack([np.asarray(vectors[u], dtype=np.float64) for u in users])
        diff = x[:, None, :] - x[None, :, :]
        return cls(users, (diff * diff).sum(axis=-1))

    def d(self, j: int, k: int) -> float:
        return float(self.values[self._index[j], self._index[k]])

    def scaled(self, factor: float) -> "DistanceMatrix":
        return DistanceMatrix(self.users, self.values * factor)

    def __len__(self):
        return len(self.users)


@dataclass
class SelectionResult:
    selected: list[int]
    scores: list[dict[int, float]] = dc_field(default_factory=list)
    chosen: list[int] = dc_field(default_factory=list)


def decode_all_distances(reports: Mapping[int, Mapping[tuple[int, int], int]],
                         users: Sequence[int], thetas: Mapping[int, int], T: int,
                         cfg: QuantConfig, max_errors: int | None = None,
                         rng: np.random.Generator | None = None):
    """Recover ``|w_j - w_k|^2`` for every pair of ``users`` from per-reporter shares.

    ``reports[i][(j, k)]`` is reporter i's value for the pair (j < k); a
    missing reporter or missing pair is an erasure.  Each pair is an
    independent Reed-Solomon codeword of degree <= 2T over the reporters'
    points.  Returns the DistanceMatrix and the set of reporter ids whose
    values were corrected.
    """
    field = cfg.field
    users = tuple(sorted(users))
    reporters = sorted(thetas)
    pairs = list(combinations(users, 2))
    idx = {u: i for i, u in enumerate(users)}
    residues = field.zeros((len(users), len(users)))
    if not pairs:
        return DistanceMatrix.from_field(users, residues, cfg), set()
    vals = field.zeros((len(reporters), len(pairs)))
    present = np.zeros((len(reporters), len(pairs)), dtype=bool)
    for r, rep in enumerate(reporters):
        got = reports.get(rep)
        if got is None:
            continue
        for c, pair in enumerate(pairs):
            v = got.get(pair)
            if v is not None:
                vals[r, c] = v
                present[r, c] = True
    dec = decode_batch([thetas[r] for r in reporters], vals, present, 2 * T, field,
                       max_errors=max_errors, rng=rng, tags=pairs)
    for c, (j, k) in enumerate(pairs):
        residues[idx[j], idx[k]] = residues[idx[k], idx[j]] = dec.secrets[c]
    by_theta = {thetas[r]: r for r in reporters}
    bad = {by_theta[t] for t in dec.error_positions}
    return DistanceMatrix.from_field(users, residues, cfg), bad


def closest_set_size(n_remaining: int, A: int) -> int:
    return n_remaining - A - 2


def krum_score(j: int, dist: DistanceMatrix, remaining: Sequence[int], A: int) -> float:
    """Sum of the ``|remaining| - A - 2`` smallest distances from j to the others in ``remaining``."""
    size = closest_set_size(len(remaining), A)
    if size < 1:
        raise BadParams(f"closest-set size {size} < 1 with {len(remaining)} remaining and A={A}")
    others = sorted(dist.d(j, u) for u in remaining if u != j)
    if len(others) < size:
        raise BadParams("fewer neighbours than the closest-set size")
    return float(sum(others[:size]))


def multi_krum(dist: DistanceMatrix, A: int, m: int, N: int | None = None,
               candidates: Sequence[int] | None = None) -> SelectionResult:
    """Select m users by repeated Krum; ties go to the lowest user id."""
    remaining = sorted(dist.users if candidates is None else candidates)
    N = len(remaining) if N is None else N
    if m < 1:
        raise BadParams("m must be at least 1")
    if m > len(remaining):
        raise BadParams(f"cannot select m={m} from {len(remaining)} candidates")
    if not 2 * A + 2 < N - m:
        warnings.warn(f"2A+2 < N-m does not hold (A={A}, N={N}, m={m})", stacklevel=2)
    if closest_set_size(len(remaining) - m + 1, A) < 1:
        raise BadParams(
            f"closest-set size reaches {closest_set_size(len(remaining) - m + 1, A)} at iteration {m}")
    result = SelectionResult(selected=[])
    for _ in range(m):
        scores = {j: krum_score(j, dist, remaining, A) for j in remaining}
        winner = min(remaining, key=lambda j: (scores[j], j))
        result.scores.append(scores)
        result.chosen.append(winner)
        result.selected.append(winner)
        remaining.remove(winner)
    return result
