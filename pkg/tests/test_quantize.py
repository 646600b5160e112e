from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brea.errors import OutOfRange, OverflowViolation
from brea.field import PROD_P, TEST_P, PrimeField
from brea.quantize import (
    QuantConfig,
    check_overflow,
    dequantize_aggregate,
    dequantize_distance,
    dequantize_distance_exact,
    map_phi,
    quantize_model,
    quantize_model_with_preimage,
    stochastic_round,
    stochastic_round_int,
    unmap_phi,
)

F = PrimeField(TEST_P)
FP = PrimeField(PROD_P)


def test_integral_values_are_exact():
    rng = np.random.default_rng(0)
    assert all(stochastic_round(1.0, 4, rng) == 1.0 for _ in range(100))
    assert stochastic_round(np.array([0.5, -2.25]), 4, rng).tolist() == [0.5, -2.25]


def test_rounding_probabilities():
    rng = np.random.default_rng(1)
    x = stochastic_round(np.full(100_000, 0.3), 1, rng)
    assert set(np.unique(x)) == {0.0, 1.0}
    assert abs(x.mean() - 0.3) < 5 * np.sqrt(0.21 / 1e5)

    y = stochastic_round(np.full(100_000, -0.25), 2, rng)
    assert set(np.unique(y)) == {-0.5, 0.0}
    assert abs((y == 0.0).mean() - 0.5) < 0.01


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        stochastic_round_int(np.array([np.nan]), 2, np.random.default_rng(0))


def test_phi_examples():
    assert map_phi(7, F) == 7
    assert map_phi(-5, F) == 252
    assert map_phi(0, F) == 0
    assert unmap_phi(252, F) == -5
    assert unmap_phi(127, F) == 127
    assert unmap_phi(128, F) == 128 - 257
    with pytest.raises(OutOfRange):
        map_phi(128, F)
    with pytest.raises(OutOfRange):
        map_phi(np.array([1, -128]), F)


def test_phi_round_trip_exhaustive():
    z = np.arange(-127, 128)
    assert np.array_equal(unmap_phi(map_phi(z, F), F), z)
    assert all(unmap_phi(map_phi(int(v), F), F) == v for v in z)


@given(st.integers(-(PROD_P - 1) // 2 + 1, (PROD_P - 1) // 2 - 1))
def test_phi_round_trip_production(z):
    assert unmap_phi(map_phi(z, FP), FP) == z


def test_quantize_model_examples():
    cfg = QuantConfig(2, F)
    rng = np.random.default_rng(0)
    assert quantize_model(np.array([1.0, -1.0]), cfg, rng).tolist() == [2, 255]
    assert quantize_model(np.zeros(4), cfg, rng).tolist() == [0, 0, 0, 0]
    vec, z = quantize_model_with_preimage(np.array([1.0, -1.0]), cfg, rng)
    assert z.tolist() == [2, -2] and vec.tolist() == [2, 255]


def test_quantize_model_monte_carlo_mean():
    q, M = 8, 100_000
    cfg = QuantConfig(q, FP)
    w = np.array([0.3, -1.17, 2.0001])
    rng = np.random.default_rng(7)
    draws = np.stack([stochastic_round_int(w, q, rng) for _ in range(M)])
    mean = unmap_phi(map_phi(draws, FP), FP).mean(axis=0) / q
    assert np.all(np.abs(mean - w) < 4 * (1 / (2 * q)) / np.sqrt(M))
    assert quantize_model(w, cfg, np.random.default_rng(0)).dtype == np.uint64


def test_dequantize_examples():
    cfg = QuantConfig(2, F)
    assert dequantize_distance(0, cfg) == 0.0
    assert dequantize_distance(20, cfg) == 5.0
    assert dequantize_distance_exact(21, cfg) == Fraction(21, 4)
    assert dequantize_aggregate(F.vector([5, 252]), cfg).tolist() == [2.5, -2.5]
    assert dequantize_aggregate(F.zeros(3), cfg).tolist() == [0.0, 0.0, 0.0]


def test_distance_round_trip_is_exact():
    cfg = QuantConfig(16, FP)
    rng = np.random.default_rng(11)
    for _ in range(50):
        wj, wk = rng.normal(size=30), rng.normal(size=30)
        ej, zj = quantize_model_with_preimage(wj, cfg, rng)
        ek, zk = quantize_model_with_preimage(wk, cfg, rng)
        check_overflow({1: zj, 2: zk}, cfg)
        want = sum(Fraction(int(a) - int(b), 16) ** 2 for a, b in zip(zj, zk))
        assert dequantize_distance_exact(FP.sq_dist(ej, ek), cfg) == want


def test_overflow_examples():
    cfg = QuantConfig(8, F)
    check_overflow({1: np.zeros(3, dtype=np.int64), 2: np.zeros(3, dtype=np.int64)}, cfg)
    with pytest.raises(OverflowViolation) as err:
        check_overflow({1: np.array([8]), 2: np.array([-8])}, cfg)
    assert err.value.where == (1, 2) and err.value.magnitude == 256 and err.value.limit == 128


def test_overflow_aggregate_mode_names_coordinate():
    cfg = QuantConfig(8, F)
    check_overflow({1: np.array([60, 1]), 2: np.array([60, 1])}, cfg, "aggregate")
    with pytest.raises(OverflowViolation) as err:
        check_overflow({1: np.array([1, 70]), 2: np.array([1, 70])}, cfg, "aggregate")
    assert err.value.where == 1 and err.value.magnitude == 140


def test_overflow_production_defaults_ok():
    cfg = QuantConfig(1024, FP)
    rng = np.random.default_rng(2)
    models = {u: stochastic_round_int(rng.normal(0, 0.05, 330), 1024, rng) for u in range(1, 41)}
    check_overflow(models, cfg, "distance")
    check_overflow(models, cfg, "aggregate")


def test_overflow_prefilter_is_exact_near_limit():
    cfg = QuantConfig(1, F)
    check_overflow({1: np.array([0, 0]), 2: np.array([8, 7])}, cfg)  # 113 < 128
    with pytest.raises(OverflowViolation) as err:
        check_overflow({1: np.array([0, 0]), 2: np.array([8, 8])}, cfg)  # exactly 128
    assert err.value.magnitude == 128
