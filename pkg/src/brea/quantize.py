"""Stochastic rounding onto the grid Z/q and the two's-complement embedding into F_p.

Inside the protocol a rounded value ``Q_q(x)`` is carried as the integer
``q * Q_q(x)``; conversion back to reals happens only at the output boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import BadParams, OutOfRange, OverflowViolation
from .field import PrimeField


@dataclass(frozen=True)
class QuantConfig:
    q: int
    field: PrimeField

    def __post_init__(self):
        if self.q < 1:
            raise BadParams(f"quantization level q must be >= 1, got {self.q}")


def stochastic_round_int(x, q: int, rng: np.random.Generator) -> np.ndarray:
    """Return the integer ``q * Q_q(x)`` elementwise.

    ``floor(qx)`` is bumped up by one with probability ``qx - floor(qx)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value passed to stochastic rounding")
    scaled = x * q
    low = np.floor(scaled)
    frac = scaled - low
    u = rng.random(size=x.shape)
    return (low + (u < frac)).astype(np.int64)


def stochastic_round(x, q: int, rng: np.random.Generator):
    """``Q_q(x)`` as a float (a multiple of ``1/q``); scalar in, scalar out."""
    z = stochastic_round_int(x, q, rng)
    out = z / q
    return float(out) if np.ndim(x) == 0 else out


def map_phi(z, field: PrimeField):
    """Two's-complement embedding: ``z`` if ``z >= 0`` else ``p + z``.

    Accepts an int or an integer array; raises OutOfRange for ``|z| >= (p-1)/2``.
    """
    if np.ndim(z) == 0:
        z = int(z)
        if abs(z) >= field.half:
            raise OutOfRange(f"|{z}| >= (p-1)/2 = {field.half}")
        return z % field.p
    arr = np.asarray(z)
    if arr.dtype == object:
        worst = max((abs(int(v)) for v in arr.ravel()), default=0)
    else:
        worst = int(np.max(np.abs(arr.astype(np.int64)))) if arr.size else 0
    if worst >= field.half:
        raise OutOfRange(f"|z| = {worst} >= (p-1)/2 = {field.half}")
    return field.vector(arr)


def unmap_phi(e, field: PrimeField):
    """Inverse embedding: ``e`` if ``e < (p-1)/2`` else ``e - p``."""
    if np.ndim(e) == 0:
        e = int(e)
        return e if e < field.half else e - field.p
    arr = np.asarray(e)
    if arr.dtype == object or field.p > (1 << 62):
        return np.array([int(v) if int(v) < field.half else int(v) - field.p for v in arr.ravel()],
                        dtype=object).reshape(arr.shape)
    signed = arr.astype(np.int64)
    return np.where(signed < field.half, signed, signed - field.p)


def quantize_model(w, cfg: QuantConfig, rng: np.random.Generator) -> np.ndarray:
    """``phi(q * Q_q(w))`` as a field vector."""
    return map_phi(stochastic_round_int(w, cfg.q, rng), cfg.field)


def quantize_model_with_preimage(w, cfg: QuantConfig, rng: np.random.Generator):
    """Like :func:`quantize_model` but also returns the integer vector ``q * Q_q(w)``."""
    z = stochastic_round_int(w, cfg.q, rng)
    return map_phi(z, cfg.field), z


def dequantize_distance(e: int, cfg: QuantConfig) -> float:
    return unmap_phi(int(e), cfg.field) / (cfg.q * cfg.q)


def dequantize_distance_exact(e: int, cfg: QuantConfig) -> Fraction:
    return Fraction(unmap_phi(int(e), cfg.field), cfg.q * cfg.q)


def dequantize_aggregate(v, cfg: QuantConfig) -> np.ndarray:
    signed = unmap_phi(np.asarray(v), cfg.field)
    return np.asarray(signed, dtype=np.float64) / cfg.q


def _exact_sq_norm(diff: np.ndarray) -> int:
    return sum(int(x) * int(x) for x in diff.tolist())


def check_overflow(models: Mapping[int, np.ndarray], cfg: QuantConfig, mode: str = "distance") -> None:
    """Raise OverflowViolation unless the field is wide enough for ``models``.

    ``models`` maps user id to the integer vector ``q * Q_q(w)``.  Distance
    mode requires ``|z_j - z_k|^2 < (p-1)/2`` for every pair; aggregate mode
    requires ``|sum_j z_j[c]| < (p-1)/2`` for every coordinate ``c``.
    """
    limit = cfg.field.half
    ids = sorted(models)
    if mode == "distance":
        if len(ids) < 2:
            return
        z = np.stack([np.asarray(models[i], dtype=np.int64) for i in ids]).astype(np.float64)
        sq = (z * z).sum(axis=1)
        approx = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
        # float prefilter; anything near the limit is re-checked exactly
        suspects = np.argwhere(np.triu(approx >= 0.5 * limit, k=1))
        for a, b in suspects:
            diff = np.asarray(models[ids[a]], dtype=object) - np.asarray(models[ids[b]], dtype=object)
            mag = _exact_sq_norm(diff)
            if mag >= limit:
                raise OverflowViolation(
                    f"q^2 |Q(w_{ids[a]}) - Q(w_{ids[b]})|^2 = {mag} >= (p-1)/2 = {limit}",
                    mode, (ids[a], ids[b]), mag, limit)
    elif mode == "aggregate":
        if not ids:
            return
        total = np.zeros(len(models[ids[0]]), dtype=object)
        for i in ids:
            total = total + np.asarray(models[i], dtype=object)
        for c, v in enumerate(total.tolist()):
            if abs(int(v)) >= limit:
                raise OverflowViolation(
                    f"|q * sum Q(w)[{c}]| = {abs(int(v))} >= (p-1)/2 = {limit}",
                    mode, c, abs(int(v)), limit)
    else:
        raise ValueError(f"unknown overflow mode {mode!r}")
