import math

import numpy as np
import pytest

from pvchart.ewma import (
    EValueState,
    EwmaState,
    Variant,
    calibrate_p_to_e,
    e_chart_step,
    ewma_weights,
    max_weight,
    q_constant,
    q_step,
    t_max,
)
from pvchart.merge import valid_merge


def brute_t_max(lam):
    t = 1
    while (1 - lam) ** (t - 1) > lam:
        t += 1
    return t


@pytest.mark.parametrize("lam", [0.01, 0.05, 0.1, 0.2, 0.3, 0.25, 0.4, 0.5, 0.7, 0.99])
def test_t_max_brute_force(lam):
    assert t_max(lam) == brute_t_max(lam)


@pytest.mark.parametrize("lam,t", [(0.3, 1), (0.3, 5), (0.7, 12), (0.1, 40)])
def test_weights_and_closed_form_max(lam, t):
    w = ewma_weights(lam, t)
    assert math.fsum(w.weights) == pytest.approx(1.0, abs=1e-14)
    assert w.w_max == pytest.approx(float(max_weight(lam, t)))


GRID = [(0.5, -0.9), (0.5, -0.8), (0.3, 0.5), (0.9, 1.0), (0.95, 2.0)]


@pytest.mark.parametrize(
    "variant,lam,r",
    [(v, lam, r) for v in Variant for lam, r in GRID if v is not Variant.QBAR or r >= 1],
)
def test_recursion_equals_weighted_merge(variant, lam, r):
    rng = np.random.default_rng(3)
    p = rng.uniform(size=30)
    state = EwmaState(lam, r, variant)
    for t in range(1, p.size + 1):
        stat = state.step(p[t - 1])
        w = ewma_weights(lam, t)
        merged = valid_merge(r, w, p[:t])
        # only the constant differs between variants
        scale = q_constant(variant, lam, r, t) / q_constant(Variant.Q, lam, r, t)
        assert stat == pytest.approx(scale * merged, rel=1e-10)


def test_variant_ordering():
    # QTilde >= Q always; QBar = QTilde once r >= 1 and lam >= 1/2
    for t in range(1, 10):
        assert q_constant("qtilde", 0.3, -0.5, t) >= q_constant("q", 0.3, -0.5, t)
    for t in range(2, 10):
        assert q_constant("q", 0.9, 1.0, t) == pytest.approx(q_constant("qbar", 0.9, 1.0, t))
    assert q_constant("q", 0.9, 1.0, 1) == pytest.approx(1.0)
    assert q_constant("qbar", 0.9, 1.0, 1) == pytest.approx(1 / 0.9)


def test_qbar_rejects_small_exponent():
    with pytest.raises(ValueError):
        EwmaState(0.9, 0.5, Variant.QBAR)
    with pytest.raises(ValueError):
        q_constant("qbar", 0.9, -0.5)


@pytest.mark.parametrize("variant", list(Variant))
def test_process_matches_step_across_chunks(variant):
    rng = np.random.default_rng(5)
    p = rng.uniform(size=200)
    a = EwmaState(0.9, 1.5, variant)
    stepped = np.array([q_step(a, x) for x in p])
    b = EwmaState(0.9, 1.5, variant)
    chunked = np.concatenate([b.process(p[:7]), b.process(p[7:100]), b.process(p[100:])])
    np.testing.assert_allclose(chunked, stepped, rtol=1e-12)


def test_zero_pvalue_negative_exponent():
    state = EwmaState(0.5, -0.5, Variant.QTILDE)
    assert state.step(0.0) == 0.0
    # the infinite power keeps the statistic at 0 until it decays away: it never does
    assert state.step(0.7) == 0.0


def test_calibrator_integrates_to_one():
    from scipy.integrate import quad

    for beta in (0.1, 0.5, 0.9):
        val, _ = quad(lambda p: calibrate_p_to_e(beta, p), 0, 1)
        assert val == pytest.approx(1.0, rel=1e-6)
    assert calibrate_p_to_e(0.5, 0.0) == math.inf


def test_e_chart_step_and_process():
    rng = np.random.default_rng(2)
    p = rng.uniform(size=50)
    a = EValueState(0.3, 0.5)
    stepped = np.array([a.step(x) for x in p])
    b = EValueState(0.3, 0.5)
    np.testing.assert_allclose(np.concatenate([b.process(p[:11]), b.process(p[11:])]), stepped)
    # first statistic is 1 / (beta p^(beta-1))
    assert stepped[0] == pytest.approx(p[0] ** 0.5 / 0.5)
    c = EValueState(0.3, 0.5)
    assert e_chart_step(c, 0.9) == 1.0
