"""Desk-scale learning task: data, multinomial logistic regression, FedAvg and BREA rounds."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import EmptyPartition
from .protocol import Attack, Phase, RoundConfig, RoundOutcome, run_round
from .quantize import QuantConfig, dequantize_aggregate, stochastic_round_int
from .rng import Purpose, stream

N_CLASSES = 10


@dataclass
class Dataset:
    X: np.ndarray  # (n, f) float64
    y: np.ndarray  # (n,) int64
    n_classes: int = N_CLASSES
    bias_input: float = 1.0  # the constant input multiplying the bias terms

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError(f"X has shape {self.X.shape} but y has {len(self.y)} labels")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        """Parameter count of the logistic model: weights plus biases."""
        return (self.n_features + 1) * self.n_classes

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.n_classes, self.bias_input)

    def scaled(self, s: float) -> "Dataset":
        """Multiply every model input, the bias input included, by ``s``.

        Gradients shrink by ``s`` and curvature by ``s**2``; with the step size
        divided by ``s**2`` the plain-SGD trajectory is unchanged, while
        quantizing at level q acts like quantizing the unscaled problem at q*s.
        """
        return Dataset(self.X * s, self.y, self.n_classes, self.bias_input * s)


def gaussian_mixture(n: int, n_features: int = 32, n_classes: int = N_CLASSES, sep: float = 1.0,
                     rng: np.random.Generator | None = None) -> Dataset:
    """``n`` samples from ``n_classes`` isotropic Gaussians with random unit-scale means."""
    rng = rng if rng is not None else np.random.default_rng(0)
    means = rng.normal(0.0, sep, size=(n_classes, n_features))
    y = rng.integers(0, n_classes, size=n)
    X = means[y] + rng.normal(0.0, 1.0, size=(n, n_features))
    return Dataset(X, y, n_classes)


def load_csv(path: str | Path, n_classes: int | None = None) -> Dataset:
    """One sample per row, integer label in the last column; a non-numeric header row is skipped."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(v) for v in first.strip().split(",")]
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    y = data[:, -1].astype(np.int64)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    return Dataset(data[:, :-1], y, k)


def train_test_split(data: Dataset, test_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    perm = rng.permutation(len(data))
    n_test = int(round(test_fraction * len(data)))
    return data.subset(perm[n_test:]), data.subset(perm[:n_test])


def partition(data: Dataset, n_users: int, rng: np.random.Generator) -> dict[int, Dataset]:
    """Shuffle, then split into ``n_users`` equal i.i.d. parts (remainder dropped); keys are 1..N."""
    size = len(data) // n_users
    if size == 0:
        raise EmptyPartition(f"{len(data)} samples cannot fill {n_users} partitions")
    perm = rng.permutation(len(data))
    return {u + 1: data.subset(perm[u * size:(u + 1) * size]) for u in range(n_users)}


# multinomial logistic regression ------------------------------------------------

def unpack(w: np.ndarray, n_features: int, n_classes: int = N_CLASSES) -> tuple[np.ndarray, np.ndarray]:
    W = w[: n_features * n_classes].reshape(n_features, n_classes)
    return W, w[n_features * n_classes:]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(w: np.ndarray, data: Dataset) -> float:
    """Mean cross-entropy of the logistic model on ``data``."""
    W, b = unpack(w, data.n_features, data.n_classes)
    logp = _log_softmax(data.X @ W + data.bias_input * b)
    return float(-logp[np.arange(len(data)), data.y].mean())


def full_gradient(w: np.ndarray, data: Dataset) -> np.ndarray:
    if len(data) == 0:
        raise EmptyPartition("gradient over an empty dataset")
    W, b = unpack(w, data.n_features, data.n_classes)
    probs = np.exp(_log_softmax(data.X @ W + data.bias_input * b))
    probs[np.arange(len(data)), data.y] -= 1.0
    probs /= len(data)
    return np.concatenate([(data.X.T @ probs).ravel(), data.bias_input * probs.sum(axis=0)])


def local_gradient(w: np.ndarray, part: Dataset, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Mini-batch cross-entropy gradient, batch drawn uniformly without replacement."""
    if len(part) == 0:
        raise EmptyPartition("user partition is empty")
    if batch_size > len(part):
        raise ValueError(f"batch size {batch_size} exceeds partition size {len(part)}")
    if batch_size == len(part):
        return full_gradient(w, part)
    idx = rng.choice(len(part), size=batch_size, replace=False)
    return full_gradient(w, part.subset(idx))


def evaluate(w: np.ndarray, data: Dataset) -> tuple[float, float]:
    """(cross-entropy, accuracy)."""
    W, b = unpack(w, data.n_features, data.n_classes)
    logits = data.X @ W + data.bias_input * b
    logp = _log_softmax(logits)
    ce = float(-logp[np.arange(len(data)), data.y].mean())
    acc = float((logits.argmax(axis=1) == data.y).mean())
    return ce, acc


# schedules and local optimizers -------------------------------------------------

@dataclass(frozen=True)
class LrSchedule:
    """``gamma0 / (1+t)**power`` (kind="poly") or a constant ``gamma0``."""

    kind: str = "poly"
    gamma0: float = 0.05
    power: float = 0.6

    def __post_init__(self):
        if self.kind not in ("poly", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "poly" and not 0.5 < self.power <= 1.0:
            warnings.warn(f"power {self.power} does not give sum(gamma)=inf with sum(gamma^2)<inf",
                          stacklevel=2)

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.gamma0
        return self.gamma0 / (1.0 + t) ** self.power

    def notes(self) -> list[str]:
        if self.kind == "constant":
            return ["constant learning rate: step sizes are not square-summable, convergence is not guaranteed"]
        return []


@dataclass
class LocalAdam:
    """Per-user Adam state; the transmitted local model is the bias-corrected step direction."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[int, np.ndarray] = dc_field(default_factory=dict)
    v: dict[int, np.ndarray] = dc_field(default_factory=dict)
    t: dict[int, int] = dc_field(default_factory=dict)

    def step(self, uid: int, g: np.ndarray) -> np.ndarray:
        m = self.beta1 * self.m.get(uid, np.zeros_like(g)) + (1 - self.beta1) * g
        v = self.beta2 * self.v.get(uid, np.zeros_like(g)) + (1 - self.beta2) * g * g
        t = self.t.get(uid, 0) + 1
        self.m[uid], self.v[uid], self.t[uid] = m, v, t
        mhat = m / (1 - self.beta1 ** t)
        vhat = v / (1 - self.beta2 ** t)
        return mhat / (np.sqrt(vhat) + self.eps)


def local_models(w: np.ndarray, parts: Mapping[int, Dataset], batch_size: int, seed: int, t: int,
                 adam: LocalAdam | None = None) -> dict[int, np.ndarray]:
    """Every user's local model for round ``t`` (a gradient estimate unless Adam is on)."""
    out = {}
    for u, part in parts.items():
        g = local_gradient(w, part, batch_size, stream(seed, t, u, Purpose.BATCH))
        out[u] = adam.step(u, g) if adam is not None else g
    return out


def poison_vector(d: int, cfg: QuantConfig, rng: np.random.Generator) -> np.ndarray:
    """Real-domain image ``phi^-1(r)/q`` of a uniformly random field vector ``r``.

    This is what a poisoning user contributes when the aggregator works on
    reals (FedAvg), matching the field-domain attack used under BREA.
    """
    return dequantize_aggregate(cfg.field.random(rng, d), cfg)


# rounds -------------------------------------------------------------------------

def fedavg_round(w: np.ndarray, models: Mapping[int, np.ndarray], m: int, lr: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, list[int]]:
    """Pick ``m`` users uniformly at random and step along the sum of their models."""
    users = sorted(models)
    if m > len(users):
        raise ValueError(f"cannot pick m={m} of {len(users)} users")
    chosen = sorted(int(u) for u in rng.choice(users, size=m, replace=False))
    total = np.sum([models[u] for u in chosen], axis=0)
    return w - lr * total, chosen


def brea_round(w: np.ndarray, models: Mapping[int, np.ndarray], cfg: RoundConfig, lr: float,
               behaviors: Mapping[int, Attack] | None = None, dropouts: Mapping[int, Phase] | None = None,
               seed: int = 0, t: int = 0, overflow_check: bool = True) -> RoundOutcome:
    """Secure round via the protocol; ``outcome.new_model`` is ``w - lr * sum_S Q_q(w_j)``."""
    return run_round(w, models, cfg, lr, behaviors=behaviors, dropouts=dropouts, seed=seed,
                     round_index=t, overflow_check=overflow_check)


def quantized_sq_norm(g: np.ndarray, q: int, rng: np.random.Generator) -> float:
    """``|Q_q(g)|^2`` for the moment diagnostic."""
    z = stochastic_round_int(g, q, rng).astype(np.float64) / q
    return float(z @ z)


@dataclass
class MomentMonitor:
    """Tracks ``|Q_q(g)|^2`` against ``|w|^2`` and fits ``A2 + B2 |w|^2`` as an upper envelope."""

    samples: list[tuple[float, float]] = dc_field(default_factory=list)

    def record(self, w: np.ndarray, qnorm2: float) -> None:
        self.samples.append((float(w @ w), qnorm2))

    def fit(self) -> tuple[float, float]:
        if not self.samples:
            return 0.0, 0.0
        arr = np.array(self.samples)
        x, y = arr[:, 0], arr[:, 1]
        if np.ptp(x) == 0:
            return float(y.max()), 0.0
        B2, A2 = np.polyfit(x, y, 1)
        B2 = max(B2, 0.0)
        A2 = float(np.max(y - B2 * x))  # shift to an envelope
        return A2, float(B2)

    def violated(self, slack: float = 2.0) -> bool:
        """True when the latest sample exceeds ``slack`` times the envelope fitted to the earlier ones."""
        if len(self.samples) < 5:
            return False
        A2, B2 = MomentMonitor(self.samples[:-1]).fit()
        x, y = self.samples[-1]
        return y > slack * (A2 + B2 * x) + 1e-12


def chance_accuracy(n_classes: int = N_CLASSES) -> float:
    return 1.0 / n_classes


def is_diverged(loss_value: float, n_classes: int = N_CLASSES) -> bool:
    return not math.isfinite(loss_value) or loss_value > 10 * math.log(n_classes)
