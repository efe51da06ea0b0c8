import numpy as np
import pytest

from pvchart.core import (
    AlarmRule,
    Chart,
    EValueEwma,
    PValue,
    QBarEwma,
    QEwma,
    QTildeEwma,
    Raw,
    chart_statistics,
    chart_step,
    clamp_pvalue,
    clamp_pvalues,
    preserves_conditional_validity,
)


def test_clamp_absorbs_round_off_only():
    assert clamp_pvalue(1 + 1e-13) == 1.0
    assert clamp_pvalue(-1e-13) == 0.0
    for bad in (1.01, -0.1, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            clamp_pvalue(bad)
    np.testing.assert_array_equal(clamp_pvalues([0.2, 1 + 1e-14]), [0.2, 1.0])
    with pytest.raises(ValueError):
        clamp_pvalues([0.2, 2.0])


def test_pvalue_orders_and_clamps():
    assert PValue(0.1) < PValue(0.2)
    assert float(PValue(-1e-15)) == 0.0


def test_alarm_rule_is_non_strict():
    rule = AlarmRule(0.05, 2)
    assert rule.fires(0.05)
    assert not rule.fires(0.0500001)
    for a, k in ((0.0, 1), (1.5, 1), (0.05, 0), (0.05, 1.5)):
        with pytest.raises(ValueError):
            AlarmRule(a, k)


def test_conditional_validity_classes():
    assert preserves_conditional_validity(Raw())
    assert preserves_conditional_validity(QBarEwma(0.9, 1.0))
    assert not preserves_conditional_validity(QTildeEwma(0.5, -0.9))
    assert not preserves_conditional_validity(QEwma(0.5, -0.9))
    assert not preserves_conditional_validity(EValueEwma(0.5))


def test_qbar_kind_rejects_small_r():
    with pytest.raises(ValueError):
        QBarEwma(0.9, 0.5)


def test_chart_steps_and_finalize():
    chart = Chart(Raw(), AlarmRule(0.05))
    out = chart.run([0.5, 0.01, 0.05])
    assert [s.alarm for s in out] == [False, True, True]
    assert [s.time for s in out] == [1, 2, 3]
    assert chart.alarms == 2
    chart.finalize()
    assert chart.finalized
    with pytest.raises(RuntimeError):
        chart.step(0.3)


def test_uncapped_raw_kept_alongside_clamped():
    chart = Chart(QTildeEwma(0.5, -0.5), AlarmRule(0.05))
    s = chart.step(0.5)
    assert s.raw == pytest.approx(2.0)  # constant 4 times 0.5, over 1
    assert s.clamped.value == 1.0


def test_chart_step_rule_override():
    chart = Chart(Raw(), AlarmRule(0.01))
    assert not chart_step(chart, 0.03).alarm
    assert chart_step(chart, 0.03, AlarmRule(0.05)).alarm


def test_batch_equals_streaming():
    rng = np.random.default_rng(0)
    p = rng.uniform(size=100)
    for kind in (Raw(), QEwma(0.3, -0.5), QBarEwma(0.95, 1.0), EValueEwma(0.2, 0.3)):
        chart = Chart(kind, AlarmRule(0.05))
        streamed = [s.raw for s in chart.run(p)]
        np.testing.assert_allclose(chart_statistics(kind, p), streamed, rtol=1e-12)
