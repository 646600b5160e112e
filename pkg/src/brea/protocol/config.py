from __future__ import annotations

from dataclasses import dataclass

from ..errors import BadParams
from ..field import PROD_P, CommitGroup, PrimeField, commit_group_for
from ..quantize import QuantConfig
from ..vss import EvalPoints


def required_users(A: int, D: int, T: int, m: int) -> int:
    """Smallest N for which every phase of a round is guaranteed to succeed."""
    return 2 * A + 1 + max(m + 2, D + 2 * T)


def threshold_violations(N: int, A: int, D: int, T: int, m: int) -> list[str]:
    """Every violated inequality among the round parameters, with its numbers."""
    out = []
    need = required_users(A, D, T, m)
    if N < need:
        out.append(f"threshold bound N >= 2A+1+max(m+2, D+2T): need {need}, got N={N}")
    if not 2 * A + 2 < N - m:
        out.append(f"multi-Krum condition 2A+2 < N-m: {2 * A + 2} >= {N - m}")
    if T < 1:
        out.append(f"privacy threshold T >= 1: got T={T}")
    if m < 1:
        out.append(f"selection size m >= 1: got m={m}")
    if min(N, A, D, T, m) < 0:
        out.append("all round parameters must be nonnegative")
    return out


@dataclass(frozen=True)
class RoundConfig:
    N: int
    A: int
    D: int
    T: int
    m: int
    q: int
    field: PrimeField
    grp: CommitGroup
    points: EvalPoints
    allow_infeasible: bool = False

    def __post_init__(self):
        if len(self.points) != self.N:
            raise BadParams(f"{len(self.points)} evaluation points for N={self.N} users")
        if self.grp.p != self.field.p:
            raise BadParams("commitment group order differs from the field modulus")
        problems = self.violations()
        if problems and not self.allow_infeasible:
            raise BadParams("; ".join(problems))

    @classmethod
    def create(cls, N: int, A: int, D: int, T: int, m: int, q: int = 1024, p: int = PROD_P,
               allow_infeasible: bool = False) -> "RoundConfig":
        field = PrimeField(p)
        return cls(N=N, A=A, D=D, T=T, m=m, q=q, field=field, grp=commit_group_for(field),
                   points=EvalPoints.consecutive(N, field), allow_infeasible=allow_infeasible)

    def violations(self) -> list[str]:
        out = threshold_violations(self.N, self.A, self.D, self.T, self.m)
        if self.N >= self.field.p:
            out.append(f"need N < p, got N={self.N}, p={self.field.p}")
        return out

    @property
    def quant(self) -> QuantConfig:
        return QuantConfig(self.q, self.field)

    @property
    def users(self) -> range:
        return range(1, self.N + 1)

    @property
    def thetas(self) -> dict[int, int]:
        return {u: self.points.theta(u) for u in self.users}
