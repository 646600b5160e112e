"""Reed-Solomon decoding over F_p with erasures and errors.

Codewords are evaluations of a polynomial of degree <= ``degree_bound`` at
distinct points.  Erasures are simply dropped; errors are corrected with a
Berlekamp-Welch linear system, which succeeds whenever
``present >= degree_bound + 1 + 2 * errors``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeFailure, DuplicatePoints, RadiusViolated
from .field import PrimeField


@dataclass(frozen=True)
class EvalSet:
    """``entries[i] = (theta, value)``; a value of ``None`` is an erasure."""

    entries: tuple[tuple[int, int | None], ...]

    def __post_init__(self):
        thetas = [t for t, _ in self.entries]
        if len(set(thetas)) != len(thetas):
            raise DuplicatePoints("evaluation points must be distinct")

    @classmethod
    def from_values(cls, thetas: Sequence[int], values: Sequence[int],
                    present: Sequence[bool] | None = None) -> "EvalSet":
        present = [True] * len(thetas) if present is None else present
        return cls(tuple((int(t), int(v) if ok else None)
                         for t, v, ok in zip(thetas, values, present)))

    @property
    def present(self) -> list[tuple[int, int]]:
        return [(t, v) for t, v in self.entries if v is not None]


@dataclass(frozen=True)
class DecodedPoly:
    coeffs: tuple[int, ...]
    error_positions: tuple[int, ...] = ()

    @property
    def degree(self) -> int:
        d = len(self.coeffs) - 1
        while d > 0 and self.coeffs[d] == 0:
            d -= 1
        return d


def poly_eval(coeffs: Sequence[int], x: int, field: PrimeField) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % field.p
    return acc


def _poly_mul_linear(poly: list[int], root: int, p: int) -> list[int]:
    """``poly * (x - root)``."""
    out = [0] * (len(poly) + 1)
    for i, c in enumerate(poly):
        out[i + 1] = (out[i + 1] + c) % p
        out[i] = (out[i] - c * root) % p
    return out


def _poly_divmod(num: list[int], den: list[int], field: PrimeField) -> tuple[list[int], list[int]]:
    p = field.p
    num = list(num)
    while len(den) > 1 and den[-1] == 0:
        den = den[:-1]
    inv_lead = field.inv(den[-1])
    quot = [0] * max(1, len(num) - len(den) + 1)
    for i in range(len(num) - len(den), -1, -1):
        c = num[i + len(den) - 1] * inv_lead % p
        quot[i] = c
        if c:
            for j, dc in enumerate(den):
                num[i + j] = (num[i + j] - c * dc) % p
    rem = num[: len(den) - 1] or [0]
    return quot, rem


def lagrange_interpolate(points: Iterable[tuple[int, int]], field: PrimeField) -> DecodedPoly:
    """The unique polynomial of degree < n through n distinct points."""
    pts = [(int(t) % field.p, int(v) % field.p) for t, v in points]
    thetas = [t for t, _ in pts]
    if len(set(thetas)) != len(thetas):
        raise DuplicatePoints("repeated theta in interpolation")
    p = field.p
    n = len(pts)
    coeffs = [0] * n
    for i, (xi, yi) in enumerate(pts):
        basis = [1]
        denom = 1
        for j, (xj, _) in enumerate(pts):
            if j != i:
                basis = _poly_mul_linear(basis, xj, p)
                denom = denom * (xi - xj) % p
        scale = yi * field.inv(denom) % p
        for k, c in enumerate(basis):
            coeffs[k] = (coeffs[k] + scale * c) % p
    return DecodedPoly(tuple(coeffs))


def lagrange_weights(src: Sequence[int], dst: Sequence[int], field: PrimeField) -> list[list[int]]:
    """Matrix ``W`` with ``f(dst[r]) = sum_i W[r][i] * f(src[i])`` for deg f < len(src)."""
    p = field.p
    src = [int(s) % p for s in src]
    if len(set(src)) != len(src):
        raise DuplicatePoints("repeated source point")
    denoms = []
    for i, xi in enumerate(src):
        d = 1
        for j, xj in enumerate(src):
            if j != i:
                d = d * (xi - xj) % p
        denoms.append(field.inv(d))
    rows = []
    for x in dst:
        x %= p
        row = []
        for i in range(len(src)):
            num = denoms[i]
            for j, xj in enumerate(src):
                if j != i:
                    num = num * (x - xj) % p
            row.append(num)
        rows.append(row)
    return rows


def _solve_mod(a: list[list[int]], b: list[int], field: PrimeField) -> list[int] | None:
    """One solution of ``a x = b`` over F_p (free variables set to 0), or None."""
    p = field.p
    rows, cols = len(a), len(a[0]) if a else 0
    m = [list(r) + [bv] for r, bv in zip(a, b)]
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if m[i][c]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = field.inv(m[r][c])
        m[r] = [v * inv % p for v in m[r]]
        for i in range(rows):
            if i != r and m[i][c]:
                f = m[i][c]
                ri = m[r]
                m[i] = [(vi - f * vr) % p for vi, vr in zip(m[i], ri)]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    if any(m[i][cols] for i in range(r, rows)):
        return None
    x = [0] * cols
    for i, c in enumerate(pivots):
        x[c] = m[i][cols]
    return x


def rs_decode(evals: EvalSet, degree_bound: int, max_errors: int, field: PrimeField) -> DecodedPoly:
    """Berlekamp-Welch decoding with erasures removed up front.

    Returns the polynomial of degree <= ``degree_bound`` that disagrees with
    at most ``max_errors`` present entries, together with the thetas where it
    disagrees.  Raises RadiusViolated when there are too few present entries
    for the requested radius and DecodeFailure when no such polynomial exists.
    """
    pts = evals.present
    n = len(pts)
    e = max_errors
    if e < 0 or degree_bound < 0:
        raise ValueError("degree_bound and max_errors must be nonnegative")
    if n < degree_bound + 1 + 2 * e:
        raise RadiusViolated(
            f"{n} present evaluations cannot correct {e} errors at degree {degree_bound}",
            present=n)
    p = field.p
    n_q = degree_bound + e + 1
    a, b = [], []
    for x, y in pts:
        row = []
        xp = 1
        for _ in range(n_q):
            row.append(xp)
            xp = xp * x % p
        xp = 1
        for _ in range(e):
            row.append((-y * xp) % p)
            xp = xp * x % p
        a.append(row)
        b.append(y * pow(x, e, p) % p)
    sol = _solve_mod(a, b, field)
    if sol is None:
        raise DecodeFailure("no codeword within the correction radius", present=n)
    q_poly = sol[:n_q]
    e_poly = sol[n_q:] + [1]
    quot, rem = _poly_divmod(q_poly, e_poly, field)
    if any(rem):
        raise DecodeFailure("error locator does not divide", present=n)
    coeffs = (quot + [0] * (degree_bound + 1))[: degree_bound + 1]
    if any(quot[degree_bound + 1:]):
        raise DecodeFailure("decoded degree exceeds bound", present=n)
    errors = tuple(x for x, y in pts if poly_eval(coeffs, x, field) != y)
    if len(errors) > e:
        raise DecodeFailure("too many disagreements", present=n, agreements=n - len(errors))
    return DecodedPoly(tuple(coeffs), errors)


def max_radius(present: int, degree_bound: int) -> int:
    return max(-1, (present - degree_bound - 1) // 2)


def recover_secret(poly: DecodedPoly) -> int:
    return poly.coeffs[0] if poly.coeffs else 0


@dataclass
class BatchDecode:
    """Constant terms for every column and the union of error thetas."""

    secrets: np.ndarray
    error_positions: set[int] = dc_field(default_factory=set)
    fallback_columns: int = 0


def decode_batch(thetas: Sequence[int], values: np.ndarray, present: np.ndarray,
                 degree_bound: int, field: PrimeField, max_errors: int | None = None,
                 rng: np.random.Generator | None = None, tags: Sequence | None = None) -> BatchDecode:
    """Decode many codewords that share evaluation points.

    ``values`` has shape (n, B): column b is a codeword.  ``present`` is a
    bool array of shape (n,) or (n, B).  Columns with the same erasure pattern
    are decoded together: error positions come from one scalar decode of a
    random linear combination, every column is then checked against the
    clean positions, and any column that fails the check is decoded on its
    own.  The result equals per-column :func:`rs_decode`.
    """
    values = field.vector(values)
    n, B = values.shape
    present = np.asarray(present, dtype=bool)
    if present.ndim == 1:
        present = np.broadcast_to(present[:, None], (n, B))
    rng = rng if rng is not None else np.random.default_rng(0x5EED)
    tags = list(range(B)) if tags is None else list(tags)
    thetas = [int(t) for t in thetas]
    secrets = field.zeros(B)
    result = BatchDecode(secrets)

    patterns, inverse = np.unique(present.T, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for g, pattern in enumerate(patterns):
        cols = np.flatnonzero(inverse == g)
        pos = np.flatnonzero(pattern)
        radius = max_radius(len(pos), degree_bound) if max_errors is None else max_errors
        if radius < 0:
            raise DecodeFailure(
                f"{len(pos)} present evaluations, need {degree_bound + 1}",
                present=len(pos), tag=tags[cols[0]])
        _decode_group(thetas, values, pos, cols, degree_bound, radius, field, rng, tags, result)
    return result


def _decode_column(thetas, values, pos, col, degree_bound, radius, field, tags, result):
    ev = EvalSet.from_values([thetas[i] for i in pos], [int(values[i, col]) for i in pos])
    try:
        dec = rs_decode(ev, degree_bound, radius, field)
    except DecodeFailure as exc:
        exc.tag = tags[col]
        raise
    result.secrets[col] = dec.coeffs[0]
    result.error_positions.update(dec.error_positions)
    result.fallback_columns += 1


def _decode_group(thetas, values, pos, cols, degree_bound, radius, field, rng, tags, result):
    sub = values[np.ix_(pos, cols)]
    rho = field.random(rng, (len(cols), 1))
    combined = field.matmul(sub, rho)[:, 0]
    ev = EvalSet.from_values([thetas[i] for i in pos], [int(v) for v in combined])
    try:
        dec = rs_decode(ev, degree_bound, radius, field)
    except DecodeFailure:
        for c in cols:
            _decode_column(thetas, values, pos, c, degree_bound, radius, field, tags, result)
        return
    bad = set(dec.error_positions)
    clean = [i for i in pos if thetas[i] not in bad]
    basis, check = clean[: degree_bound + 1], clean[degree_bound + 1:]
    w = lagrange_weights([thetas[i] for i in basis], [0] + [thetas[i] for i in check], field)
    pred = field.matmul(field.vector(w), values[np.ix_(basis, cols)])
    result.secrets[cols] = pred[0]
    result.error_positions.update(bad)
    if check:
        ok = np.all(pred[1:] == values[np.ix_(check, cols)], axis=0)
    else:
        ok = np.ones(len(cols), dtype=bool)
    for c in cols[~ok]:
        _decode_column(thetas, values, pos, c, degree_bound, radius, field, tags, result)
