import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvchart.merge import (
    WeightVector,
    bonferroni_merge,
    check_exponent,
    generalized_mean,
    merge_constant,
    valid_merge,
)


def mp_mean(r, w, p):
    mpmath.mp.dps = 50
    total = mpmath.fsum(mpmath.mpf(wi) * mpmath.mpf(pi) ** r for wi, pi in zip(w, p))
    return float(total ** (mpmath.mpf(1) / r))


class TestWeightVector:
    def test_rejects_bad_sums(self):
        with pytest.raises(ValueError):
            WeightVector([0.5, 0.4])
        with pytest.raises(ValueError):
            WeightVector([1.5, -0.5])
        with pytest.raises(ValueError):
            WeightVector([])

    def test_within_tolerance_is_kept_as_given(self):
        w = WeightVector([0.5, 0.5 + 5e-13])
        assert w.weights[1] == 0.5 + 5e-13

    def test_read_only_and_max(self):
        w = WeightVector([0.2, 0.3, 0.5])
        assert w.w_max == 0.5
        with pytest.raises(ValueError):
            w.weights[0] = 1.0

    @pytest.mark.parametrize("m", [1, 3, 7, 10, 1000])
    def test_uniform_sums_exactly(self, m):
        assert math.fsum(WeightVector.uniform(m).weights) == 1.0


@pytest.mark.parametrize("r", [-1.0, -1.5, 0.0, math.inf, math.nan])
def test_exponent_domain(r):
    with pytest.raises(ValueError):
        check_exponent(r)


@pytest.mark.parametrize("r", [-0.9, -0.5, 0.5, 1.0, 2.0, 5.0])
def test_generalized_mean_matches_high_precision(r):
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = rng.uniform(1e-6, 1, 5)
        w = rng.dirichlet(np.ones(5))
        w[-1] = 1 - math.fsum(w[:-1])
        assert generalized_mean(r, w, p) == pytest.approx(mp_mean(r, w, p), rel=1e-12)


def test_negative_exponent_tiny_p_does_not_overflow():
    # p^r overflows a double here; the log-space path must not
    p = [1e-300, 1e-300]
    got = generalized_mean(-0.9, [0.5, 0.5], p)
    assert got == pytest.approx(mp_mean(-0.9, [0.5, 0.5], p), rel=1e-10)


def test_zero_pvalue_limits():
    assert generalized_mean(-0.5, [0.5, 0.5], [0.0, 0.3]) == 0.0
    assert generalized_mean(2.0, [0.5, 0.5], [0.0, 0.5]) == pytest.approx(math.sqrt(0.125))
    # zero weight masks a zero p-value
    assert generalized_mean(-0.5, [0.0, 1.0], [0.0, 0.3]) == pytest.approx(0.3)


def test_merge_constants():
    assert merge_constant(-0.5, 0.5) == pytest.approx(4.0)
    assert merge_constant(0.5, 0.5) == pytest.approx(2.25)
    # r >= 1: capped by the largest weight
    assert merge_constant(1.0, 0.5) == pytest.approx(2.0)
    assert merge_constant(1.0, 0.9) == pytest.approx(1 / 0.9)
    assert merge_constant(2.0, 0.1) == pytest.approx(math.sqrt(3.0))


def test_constant_continuous_towards_r_zero():
    assert merge_constant(1e-8, 0.5) == pytest.approx(math.e, rel=1e-6)
    assert merge_constant(-1e-8, 0.5) == pytest.approx(math.e, rel=1e-6)


def test_bonferroni():
    assert bonferroni_merge([0.2, 0.01, 0.5]) == pytest.approx(0.03)
    assert bonferroni_merge([0.9, 0.8]) == 1.0


def test_single_pvalue_valid_merge_is_conservative():
    # a single p-value merged with itself gets only the constant
    assert valid_merge(1.0, [1.0], [0.3]) == pytest.approx(0.3)
    assert valid_merge(-0.5, [1.0], [0.3]) == pytest.approx(1.2)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(1e-8, 1.0), min_size=2, max_size=6),
    st.floats(-0.95, 3.0).filter(lambda r: abs(r) > 1e-3),
    st.floats(-0.95, 3.0).filter(lambda r: abs(r) > 1e-3),
)
def test_generalized_mean_monotone_in_exponent(p, r1, r2):
    w = WeightVector.uniform(len(p))
    lo, hi = sorted((r1, r2))
    assert generalized_mean(lo, w, p) <= generalized_mean(hi, w, p) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-8, 1.0), min_size=1, max_size=6), st.floats(-0.95, 3.0))
def test_mean_between_min_and_max(p, r):
    if abs(r) < 1e-3:
        r = 0.5
    m = generalized_mean(r, WeightVector.uniform(len(p)), p)
    assert min(p) * (1 - 1e-12) <= m <= max(p) * (1 + 1e-12)
