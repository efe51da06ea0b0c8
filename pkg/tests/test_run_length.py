import math

import numpy as np
import pytest

from pvchart.core import AlarmRule, QBarEwma, QTildeEwma, Raw
from pvchart.dgp import AR1, ConstantSource, IIDUniform, MultivariateSource, TwoPhaseNormal
from pvchart.run_length import (
    RunLengthConfig,
    RunLengthSample,
    applicable_bound,
    arl_bound_superuniform,
    estimate_run_length,
    estimate_run_lengths,
    karl_bound_conditional,
    karl_bound_superuniform,
    one_step_fwe,
    replication_rng,
    simulate_localisation,
    simulate_run_lengths,
)


def brute_superuniform_bound(alpha, k):
    # E R_k >= sum_t P(at most k-1 alarms by t-1) with P(alarm) <= alpha each step and
    # the least favourable law: sum_{t>=0} max(0, 1 - alpha t / k)
    total, t = 0.0, 0
    while 1 - alpha * t / k > 0:
        total += 1 - alpha * t / k
        t += 1
    return total


@pytest.mark.parametrize("alpha", [0.01, 0.03, 0.05, 0.1, 0.3, 0.5, 1.0])
@pytest.mark.parametrize("k", [1, 2, 5, 7])
def test_superuniform_bound_closed_form(alpha, k):
    assert karl_bound_superuniform(alpha, k) == pytest.approx(brute_superuniform_bound(alpha, k), rel=1e-12)


def test_bound_relations():
    assert arl_bound_superuniform(0.05) == karl_bound_superuniform(0.05, 1) == 10.5
    assert karl_bound_conditional(0.05, 5) == pytest.approx(100.0)
    for a in (0.01, 0.05, 0.2):
        for k in (1, 5):
            assert karl_bound_superuniform(a, k) <= karl_bound_conditional(a, k)
    with pytest.raises(ValueError):
        karl_bound_superuniform(0.0, 1)


def test_applicable_bound_selection():
    rule = AlarmRule(0.05, 1)
    assert applicable_bound(IIDUniform(), Raw(), rule) == (20.0, "conditional")
    assert applicable_bound(IIDUniform(), QTildeEwma(0.5, -0.9), rule)[1] == "superuniform"
    assert applicable_bound(IIDUniform(), QBarEwma(0.9, 1.0), rule)[1] == "conditional"
    assert applicable_bound(TwoPhaseNormal(), Raw(), rule)[1] == "superuniform"
    assert applicable_bound(AR1(0.1, 0.0, "sup"), Raw(), rule)[1] == "conditional"
    assert applicable_bound(AR1(0.1, 0.0, "marginal"), Raw(), rule)[1] == "superuniform"


def test_constant_zero_alarms_every_step():
    res = estimate_run_lengths(ConstantSource(0.0), [RunLengthConfig(Raw(), AlarmRule(0.05, k)) for k in (1, 3)],
                               reps=5, seed=0)
    assert list(res[0].sample.times) == [1] * 5
    assert list(res[1].sample.times) == [3] * 5


def test_censoring_is_reported():
    res = estimate_run_length(ConstantSource(1.0), Raw(), AlarmRule(0.05), reps=4, seed=0, max_horizon=1000)
    assert res.summary.censored == 4
    assert res.summary.flagged
    assert math.isnan(res.summary.mean)


def test_sample_summary():
    s = RunLengthSample(np.array([2, 4, -1, 6]), 10).summary(2.0, "x")
    assert (s.reps, s.completed, s.censored) == (4, 3, 1)
    assert s.mean == 4.0
    assert s.std_error == pytest.approx(2 / math.sqrt(3))
    assert s.ratio == 2.0


def test_geometric_mean_and_variance():
    res = estimate_run_length(IIDUniform(), Raw(), AlarmRule(0.1), reps=20_000, seed=11)
    assert abs(res.summary.mean - 10.0) < 4 * res.summary.std_error
    assert np.var(res.sample.times) == pytest.approx(90.0, rel=0.1)


def test_reproducible_and_worker_independent():
    cfgs = [RunLengthConfig(Raw(), AlarmRule(0.05)), RunLengthConfig(QBarEwma(0.9, 1.0), AlarmRule(0.05))]
    a = simulate_run_lengths(IIDUniform(), cfgs, 12, seed=3)
    b = simulate_run_lengths(IIDUniform(), cfgs, 12, seed=3, threads=2)
    c = simulate_run_lengths(IIDUniform(), cfgs[:1], 12, seed=3)
    np.testing.assert_array_equal(a, b)
    # adding a chart does not perturb another chart's stream
    np.testing.assert_array_equal(a[:, 0], c[:, 0])
    assert not np.array_equal(a, simulate_run_lengths(IIDUniform(), cfgs, 12, seed=4))


def test_replication_streams_distinct():
    x = replication_rng(1, 0).random(4)
    assert not np.allclose(x, replication_rng(1, 1).random(4))
    assert not np.allclose(x, replication_rng(1, 0, stream=1).random(4))
    np.testing.assert_array_equal(x, replication_rng(1, 0).random(4))


def test_qbar_alarms_no_earlier_than_raw_pathwise():
    cfgs = [RunLengthConfig(Raw(), AlarmRule(0.05)), RunLengthConfig(QBarEwma(0.9, 1.0), AlarmRule(0.05))]
    times = simulate_run_lengths(IIDUniform(), cfgs, 200, seed=8)
    assert np.all(times[:, 1] >= times[:, 0])


def test_input_validation():
    with pytest.raises(ValueError):
        simulate_run_lengths(IIDUniform(), [], 3, 0)
    with pytest.raises(ValueError):
        simulate_run_lengths(IIDUniform(), [RunLengthConfig(Raw(), AlarmRule(0.05))], 0, 0)


def test_localisation_simulation():
    src = MultivariateSource("normal", 2.0, 0.0)
    out = simulate_localisation(src, 0.05, reps=200, seed=1, fwe_reps=2000)
    assert out.censored == 0
    assert 1.0 <= out.mean_run_length < 5.0
    assert out.mean_ooc >= 1.0
    assert out.mean_fwe_at_alarm < 0.05
    freq, se = one_step_fwe(MultivariateSource("normal", 0.0, 0.0), 0.05, "bonferroni", 4000, 2)
    assert freq <= 0.05 + 3 * se
