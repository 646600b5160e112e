"""Prime-field arithmetic and the commitment group used for share verification.

Scalars are plain Python ints in ``[0, p)``.  Vectors are numpy arrays:
``uint64`` when the modulus is at most 2**32 (every product of two residues
then fits in 64 bits), ``object`` arrays of Python ints otherwise.  All
vector routines below accept either and keep results canonical.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .errors import LengthMismatch, NoGroupFound, NotPrime, ZeroInverse

PROD_P = (1 << 32) - 5
TEST_P = 257

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_U32 = 1 << 32
_FLOAT_MULMOD_LIMIT = 1 << 48


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for every n below 3.3e24."""
    if n < 2:
        return False
    for b in _MR_BASES:
        if n % b == 0:
            return n == b
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def dtype_for(modulus: int):
    return np.uint64 if modulus < _FLOAT_MULMOD_LIMIT else object


def as_residues(values, modulus: int, dtype=None) -> np.ndarray:
    """Reduce arbitrary integers (Python ints, numpy ints, negatives) mod ``modulus``."""
    dtype = dtype_for(modulus) if dtype is None else dtype
    arr = np.asarray(values)
    if dtype is not object and arr.dtype.kind == "u":
        return (arr.astype(np.uint64) % np.uint64(modulus)).astype(np.uint64)
    if dtype is not object and arr.dtype.kind == "i":
        return np.mod(arr.astype(np.int64), np.int64(modulus)).astype(np.uint64)
    flat = [int(v) % modulus for v in arr.ravel()]
    return np.array(flat, dtype=object if dtype is object else np.uint64).reshape(arr.shape)


def mulmod(a: np.ndarray, b, m: int) -> np.ndarray:
    """Elementwise ``a*b mod m`` for canonical residues, exact for any ``m``."""
    a = np.asarray(a)
    if a.dtype == object or m >= _FLOAT_MULMOD_LIMIT:
        return (np.asarray(a, dtype=object) * np.asarray(b, dtype=object)) % m
    b = np.asarray(b, dtype=np.uint64)
    if m <= _U32:
        return (a * b) % np.uint64(m)
    # Quotient from float64 is off by at most one for m < 2**48; the residue
    # is then recovered exactly in wrapping 64-bit arithmetic.
    q = np.floor(a.astype(np.float64) * b.astype(np.float64) / float(m)).astype(np.int64)
    r = (a * b).view(np.int64) - q * np.int64(m)
    r = np.where(r < 0, r + m, r)
    r = np.where(r >= m, r - m, r)
    return r.view(np.uint64)


def addmod(a, b, m: int) -> np.ndarray:
    s = np.asarray(a) + np.asarray(b)
    return s % (np.uint64(m) if np.asarray(s).dtype != object else m)


@dataclass(frozen=True)
class PrimeField:
    """The field of residues modulo a prime ``p``."""

    p: int = PROD_P

    def __post_init__(self):
        if self.p < 2 or not is_prime(self.p):
            raise NotPrime(f"{self.p} is not prime")
        if self.p >= (1 << 64):
            raise NotPrime(f"modulus {self.p} exceeds 64 bits")

    # scalar ops -----------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def neg(self, a: int) -> int:
        return (-a) % self.p

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def pow(self, a: int, e: int) -> int:
        if e < 0:
            raise ValueError("negative exponent")
        result, base = 1, a % self.p
        while e:
            if e & 1:
                result = result * base % self.p
            base = base * base % self.p
            e >>= 1
        return result % self.p

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise ZeroInverse("0 has no inverse")
        # extended Euclid
        r0, r1, s0, s1 = self.p, a, 0, 1
        while r1:
            qt = r0 // r1
            r0, r1 = r1, r0 - qt * r1
            s0, s1 = s1, s0 - qt * s1
        return s0 % self.p

    def div(self, a: int, b: int) -> int:
        return a * self.inv(b) % self.p

    # vector ops -----------------------------------------------------------

    @property
    def dtype(self):
        return np.uint64 if self.p <= _U32 else object

    @property
    def half(self) -> int:
        """``(p - 1) // 2``, the two's-complement boundary."""
        return (self.p - 1) // 2

    def vector(self, values) -> np.ndarray:
        return as_residues(values, self.p, self.dtype)

    def zeros(self, shape) -> np.ndarray:
        if self.dtype is object:
            out = np.empty(shape, dtype=object)
            out.fill(0)
            return out
        return np.zeros(shape, dtype=np.uint64)

    def random(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Uniform residues; ``rng`` is a numpy Generator."""
        if self.p <= (1 << 63):
            vals = rng.integers(0, self.p, size=shape, dtype=np.uint64)
            return vals if self.dtype is not object else vals.astype(object)
        raise NotImplementedError("moduli above 2**63")

    def vadd(self, a, b) -> np.ndarray:
        return addmod(a, b, self.p)

    def vsub(self, a, b) -> np.ndarray:
        a, b = np.asarray(a), np.asarray(b)
        if a.dtype == object or b.dtype == object:
            return (a.astype(object) - b.astype(object)) % self.p
        return (a + (np.uint64(self.p) - b)) % np.uint64(self.p)

    def vmul(self, a, b) -> np.ndarray:
        return mulmod(a, b, self.p)

    def vneg(self, a) -> np.ndarray:
        return self.vsub(self.zeros(np.shape(a)), a)

    def vsum(self, a, axis=0) -> np.ndarray:
        a = np.asarray(a)
        if a.dtype == object:
            return a.sum(axis=axis) % self.p
        # each term < 2**32, so up to 2**32 terms fit in 64 bits
        return a.sum(axis=axis, dtype=np.uint64) % np.uint64(self.p)

    def matmul(self, a, b) -> np.ndarray:
        """Exact ``a @ b mod p``."""
        a, b = np.asarray(a), np.asarray(b)
        if a.shape[-1] != b.shape[0]:
            raise LengthMismatch(f"inner dimensions {a.shape} @ {b.shape}")
        if self.dtype is object or a.dtype == object or b.dtype == object:
            return np.dot(a.astype(object), b.astype(object)) % self.p
        if a.shape[-1] >= (1 << 20):
            raise LengthMismatch("inner dimension too large for exact float limbs")
        # 16-bit limbs keep every partial sum below 2**53
        mask = np.uint64(0xFFFF)
        sh = np.uint64(16)
        a_hi, a_lo = (a >> sh).astype(np.float64), (a & mask).astype(np.float64)
        b_hi, b_lo = (b >> sh).astype(np.float64), (b & mask).astype(np.float64)
        hh = (a_hi @ b_hi).astype(np.uint64)
        mid = (a_hi @ b_lo + a_lo @ b_hi).astype(np.uint64)
        ll = (a_lo @ b_lo).astype(np.uint64)
        pp = np.uint64(self.p)
        c32 = np.uint64(_U32 % self.p)
        c16 = np.uint64((1 << 16) % self.p)
        out = (hh % pp) * c32 % pp
        out = (out + (mid % pp) * c16 % pp) % pp
        return (out + ll % pp) % pp

    def sq_dist(self, u, v) -> int:
        """``sum_k (u_k - v_k)**2 mod p``."""
        u, v = np.asarray(u), np.asarray(v)
        if u.shape != v.shape:
            raise LengthMismatch(f"lengths {u.shape} and {v.shape} differ")
        diff = self.vsub(self.vector(u), self.vector(v))
        return int(self.vsum(self.vmul(diff, diff)))

    def pairwise_sq_dists(self, rows) -> np.ndarray:
        """All-pairs squared distances mod p between the rows of ``rows``.

        Uses ``|a|^2 + |b|^2 - 2<a, b>`` with an exact modular Gram matrix.
        """
        x = self.vector(rows)
        gram = self.matmul(x, x.T)
        diag = np.diagonal(gram).copy()
        two_g = self.vadd(gram, gram)
        out = self.vsub(self.vadd(diag[:, None], diag[None, :]), two_g)
        return out


@dataclass(frozen=True)
class CommitGroup:
    """Order-``p`` subgroup of the multiplicative group mod a prime ``lam``."""

    p: int
    lam: int
    psi: int
    window: int = dc_field(default=8, compare=False)

    def __post_init__(self):
        if not is_prime(self.lam):
            raise NotPrime(f"lambda={self.lam} is not prime")
        if (self.lam - 1) % self.p:
            raise ValueError(f"p={self.p} does not divide lambda-1")
        if self.psi % self.lam == 1 or pow(self.psi, self.p, self.lam) != 1:
            raise ValueError("psi does not generate the order-p subgroup")

    @property
    def dtype(self):
        return dtype_for(self.lam)

    def mul(self, a, b) -> np.ndarray:
        return mulmod(a, b, self.lam)

    def ones(self, shape) -> np.ndarray:
        if self.dtype is object:
            out = np.empty(shape, dtype=object)
            out.fill(1)
            return out
        return np.ones(shape, dtype=np.uint64)

    @cached_property
    def _tables(self) -> list[np.ndarray]:
        w = self.window
        n_windows = max(1, -(-(self.p - 1).bit_length() // w))
        tables = []
        base = self.psi
        for _ in range(n_windows):
            row = [1] * (1 << w)
            for v in range(1, 1 << w):
                row[v] = row[v - 1] * base % self.lam
            tables.append(np.array(row, dtype=self.dtype))
            base = pow(base, 1 << w, self.lam)
        return tables

    def exp(self, exponents) -> np.ndarray:
        """``psi ** e mod lam`` elementwise, for exponents in ``[0, p)``."""
        e = np.asarray(exponents)
        if e.dtype == object:
            e = np.array([int(x) % self.p for x in e.ravel()], dtype=object).reshape(e.shape)
        else:
            e = e.astype(np.uint64)
        mask = (1 << self.window) - 1
        out = None
        for i, table in enumerate(self._tables):
            digits = (e >> (i * self.window)) & mask if e.dtype == object else \
                (e >> np.uint64(i * self.window)) & np.uint64(mask)
            term = table[np.asarray(digits).astype(np.int64)]
            out = term if out is None else self.mul(out, term)
        return out

    def pow_scalar(self, base: int, e: int) -> int:
        return pow(base, e, self.lam)

    def pow_uniform(self, base, e: int) -> np.ndarray:
        """Raise every element of ``base`` to the same nonnegative exponent."""
        base = np.asarray(base)
        result = self.ones(base.shape)
        while e:
            if e & 1:
                result = self.mul(result, base)
            e >>= 1
            if e:
                base = self.mul(base, base)
        return result

    def pow_rows(self, base, exps) -> np.ndarray:
        """Row ``i`` of ``base`` raised to ``exps[i]``."""
        base = np.asarray(base)
        exps = [int(x) for x in exps]
        result = self.ones(base.shape)
        top = max(exps, default=0).bit_length()
        for bit in range(top):
            rows = np.array([(x >> bit) & 1 for x in exps], dtype=bool)
            if rows.any():
                result[rows] = self.mul(result[rows], base[rows])
            if bit + 1 < top:
                base = self.mul(base, base)
        return result


def find_commit_group(field: PrimeField, search_limit: int = 1 << 20) -> CommitGroup:
    """Smallest prime ``lam = k*p + 1`` with ``k >= 2``, and a generator of order p."""
    p = field.p
    for k in range(2, search_limit + 1):
        lam = k * p + 1
        if not is_prime(lam):
            continue
        cofactor = (lam - 1) // p
        for h in range(2, lam):
            psi = pow(h, cofactor, lam)
            if psi != 1:
                return CommitGroup(p=p, lam=lam, psi=psi)
    raise NoGroupFound(f"no prime lambda = k*{p}+1 with 2 <= k <= {search_limit}")


_GROUP_CACHE: dict[int, CommitGroup] = {}


def commit_group_for(field: PrimeField) -> CommitGroup:
    grp = _GROUP_CACHE.get(field.p)
    if grp is None:
        grp = _GROUP_CACHE[field.p] = find_commit_group(field)
    return grp
