"""Feldman verifiable secret sharing of field vectors.

A dealer hides a vector secret as the constant term of a random degree-T
polynomial with vector coefficients, hands ``f(theta_j)`` to user j and
broadcasts ``psi ** coeff`` coordinatewise for every coefficient.  Receivers
check ``psi ** share == prod_k c_k ** (theta_j ** k)`` in the commitment group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadParams, DuplicatePoints, LengthMismatch
from .field import CommitGroup, PrimeField


@dataclass(frozen=True)
class EvalPoints:
    """The agreed evaluation points; ``thetas[i]`` belongs to user ``i + 1``."""

    thetas: tuple[int, ...]
    p: int

    def __post_init__(self):
        if len(set(self.thetas)) != len(self.thetas):
            raise DuplicatePoints("evaluation points must be distinct")
        if any(t % self.p == 0 for t in self.thetas):
            raise BadParams("0 is reserved for the secret")
        if any(not 0 < t < self.p for t in self.thetas):
            raise BadParams("evaluation points must be canonical residues")
        if len(self.thetas) >= self.p:
            raise BadParams(f"need N < p, got N={len(self.thetas)}, p={self.p}")

    @classmethod
    def consecutive(cls, n: int, field: PrimeField) -> "EvalPoints":
        return cls(tuple(range(1, n + 1)), field.p)

    def __len__(self):
        return len(self.thetas)

    def theta(self, user: int) -> int:
        """Point of user ``user`` (1-based)."""
        return self.thetas[user - 1]


@dataclass
class SharePolynomial:
    """``coeffs[0]`` is the secret, ``coeffs[1:]`` the random vectors; shape (T+1, d)."""

    coeffs: np.ndarray

    @property
    def degree_bound(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def const_term(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def rand_coeffs(self) -> np.ndarray:
        return self.coeffs[1:]

    def evaluate(self, thetas: Sequence[int], field: PrimeField) -> np.ndarray:
        """Horner evaluation at each theta; returns shape (len(thetas), d)."""
        t = field.vector(np.asarray(list(thetas)))[:, None]
        acc = np.broadcast_to(self.coeffs[-1], (len(thetas), self.coeffs.shape[1])).copy()
        for k in range(self.coeffs.shape[0] - 2, -1, -1):
            acc = field.vadd(field.vmul(acc, t), self.coeffs[k][None, :])
        return acc


@dataclass(frozen=True)
class Share:
    from_user: int
    to_user: int
    value: np.ndarray


@dataclass(frozen=True)
class CommitmentVector:
    """``commits[k]`` is ``psi ** coeffs[k]`` coordinatewise, shape (T+1, d)."""

    from_user: int
    commits: np.ndarray

    def __len__(self):
        return self.commits.shape[0]


def gen_shares(secret, T: int, points: EvalPoints, field: PrimeField,
               rng: np.random.Generator, from_user: int = 0) -> tuple[SharePolynomial, list[Share]]:
    if T < 0:
        raise BadParams("T must be nonnegative")
    if T >= len(points):
        raise BadParams(f"T={T} must be below N={len(points)}")
    secret = field.vector(np.atleast_1d(secret))
    coeffs = np.concatenate([secret[None, :], field.random(rng, (T, secret.shape[0]))], axis=0) \
        if T else secret[None, :].copy()
    poly = SharePolynomial(coeffs)
    return poly, shares_from_polynomial(poly, points, field, from_user)


def shares_from_polynomial(poly: SharePolynomial, points: EvalPoints, field: PrimeField,
                           from_user: int = 0) -> list[Share]:
    values = poly.evaluate(points.thetas, field)
    return [Share(from_user, j + 1, values[j]) for j in range(len(points))]


def gen_commitments(poly: SharePolynomial, grp: CommitGroup, from_user: int = 0) -> CommitmentVector:
    return CommitmentVector(from_user, grp.exp(poly.coeffs))


def commitment_product(commits: np.ndarray, theta: int, grp: CommitGroup) -> np.ndarray:
    """``prod_k commits[..., k, :] ** (theta ** k)`` evaluated by Horner in the exponent.

    ``commits`` has shape (..., T+1, d); the result drops the T+1 axis.
    """
    acc = commits[..., -1, :]
    for k in range(commits.shape[-2] - 2, -1, -1):
        acc = grp.mul(grp.pow_uniform(acc, theta % grp.p), commits[..., k, :])
    return acc


def verify_share(share: Share, commits: CommitmentVector, theta_j: int, grp: CommitGroup) -> bool:
    value = np.asarray(share.value)
    if value.shape[-1] != commits.commits.shape[-1]:
        return False
    lhs = grp.exp(value)
    rhs = commitment_product(commits.commits, theta_j, grp)
    return bool(np.all(lhs == rhs))


def verify_from_many(values: np.ndarray, commits: np.ndarray, theta_j: int, grp: CommitGroup) -> np.ndarray:
    """One receiver checking shares from many senders at once.

    ``values`` has shape (S, d), ``commits`` shape (S, T+1, d); returns a bool
    per sender.
    """
    lhs = grp.exp(values)
    rhs = commitment_product(commits, theta_j, grp)
    return np.all(lhs == rhs, axis=-1)


def _count_polys_through(points: list[tuple[int, np.ndarray]], T: int, field: PrimeField) -> int:
    """Number of degree-<=T vector polynomials through the given (theta, value) points."""
    thetas = [t for t, _ in points]
    if len(set(thetas)) != len(thetas):
        raise DuplicatePoints("repeated evaluation point")
    d = len(points[0][1])
    if len(points) <= T + 1:
        # Vandermonde rows at distinct points are independent
        return field.p ** ((T + 1 - len(points)) * d)
    from .rscode import lagrange_weights

    basis, rest = points[: T + 1], points[T + 1:]
    w = lagrange_weights([t for t, _ in basis], [t for t, _ in rest], field)
    vals = np.stack([field.vector(v) for _, v in basis])
    predicted = field.matmul(field.vector(w), vals)
    for (_, v), pred in zip(rest, predicted):
        if not np.array_equal(field.vector(v), pred):
            return 0
    return 1


def privacy_consistency_count(observed: Sequence[Share], candidate_secret, points: EvalPoints,
                              field: PrimeField, T: int) -> int:
    """How many degree-<=T sharing polynomials explain ``observed`` and ``candidate_secret``.

    With exactly T shares the answer is 1 for every candidate, i.e. the shares
    leave every secret equally likely.
    """
    cand = field.vector(np.atleast_1d(candidate_secret))
    pts = [(0, cand)]
    for s in observed:
        v = field.vector(np.atleast_1d(s.value))
        if v.shape != cand.shape:
            raise LengthMismatch("share and candidate lengths differ")
        pts.append((points.theta(s.to_user), v))
    return _count_polys_through(pts, T, field)
