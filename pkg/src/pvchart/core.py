"""Shared vocabulary: p-values, alarm rules, chart kinds and the chart contract.

A chart consumes one p-value per time step (``t = 1, 2, ...``) and emits a
:class:`ChartStatistic` carrying both the uncapped statistic and its value
clamped to ``[0, 1]``.  An alarm is raised when the clamped value is ``<= alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .ewma import EValueState, EwmaState, Variant, check_calibrator, check_lambda
from .merge import check_exponent

CLAMP_TOL = 1e-12


def clamp_pvalue(value: float) -> float:
    """Clamp round-off excursions into ``[0, 1]``; larger excursions are errors."""
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"p-value must be finite, got {value!r}")
    if v < -CLAMP_TOL or v > 1.0 + CLAMP_TOL:
        raise ValueError(f"p-value {v!r} lies outside [0, 1]")
    return min(1.0, max(0.0, v))


def clamp_pvalues(values) -> np.ndarray:
    """Vectorised :func:`clamp_pvalue`."""
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("p-values must be finite")
    if np.any(arr < -CLAMP_TOL) or np.any(arr > 1.0 + CLAMP_TOL):
        raise ValueError("p-values lie outside [0, 1]")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True, order=True)
class PValue:
    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", clamp_pvalue(self.value))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class AlarmRule:
    """Alarm when the statistic is ``<= alpha``; the run ends at the ``k``-th alarm."""

    alpha: float
    k: int = 1

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not 0.0 < a <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "k", int(self.k))

    def fires(self, statistic: float) -> bool:
        return min(1.0, statistic) <= self.alpha


@dataclass(frozen=True)
class ChartStatistic:
    time: int
    raw: float
    clamped: PValue
    alarm: bool


# --- chart kinds -----------------------------------------------------------


@dataclass(frozen=True)
class Raw:
    name = "raw"

    def label(self) -> str:
        return "raw"


@dataclass(frozen=True)
class _QKind:
    lam: float
    r: float

    variant = Variant.Q

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", check_lambda(self.lam))
        object.__setattr__(self, "r", check_exponent(self.r))
        if self.variant is Variant.QBAR and self.r < 1.0:
            raise ValueError("QBar chart requires r >= 1")

    def label(self) -> str:
        return f"{self.variant.value}(lambda={self.lam:g},r={self.r:g})"


@dataclass(frozen=True)
class QEwma(_QKind):
    variant = Variant.Q


@dataclass(frozen=True)
class QTildeEwma(_QKind):
    variant = Variant.QTILDE


@dataclass(frozen=True)
class QBarEwma(_QKind):
    variant = Variant.QBAR


@dataclass(frozen=True)
class EValueEwma:
    lam: float
    beta: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", check_lambda(self.lam))
        object.__setattr__(self, "beta", check_calibrator(self.beta))

    def label(self) -> str:
        return f"e(lambda={self.lam:g},beta={self.beta:g})"


ChartKind = Union[Raw, QEwma, QTildeEwma, QBarEwma, EValueEwma]


def preserves_conditional_validity(kind: ChartKind) -> bool:
    """Whether the chart maps conditionally valid inputs to conditionally valid outputs."""
    return isinstance(kind, (Raw, QBarEwma))


class _Identity:
    def process(self, p: np.ndarray) -> np.ndarray:
        return np.array(p, dtype=float, copy=True)


def make_processor(kind: ChartKind):
    """Fresh recursion state exposing ``process(p_array) -> raw statistics``."""
    if isinstance(kind, Raw):
        return _Identity()
    if isinstance(kind, _QKind):
        return EwmaState(kind.lam, kind.r, kind.variant)
    if isinstance(kind, EValueEwma):
        return EValueState(kind.lam, kind.beta)
    raise TypeError(f"unknown chart kind {kind!r}")


class Chart:
    """A running chart: feed p-values one at a time with :meth:`step`."""

    def __init__(self, kind: ChartKind, rule: AlarmRule):
        self.kind = kind
        self.rule = rule
        self.time = 0
        self.alarms = 0
        self._state = make_processor(kind)
        self._final = False

    def step(self, p: float) -> ChartStatistic:
        if self._final:
            raise RuntimeError("chart has been finalised")
        value = clamp_pvalue(p)
        raw = float(self._state.process(np.array([value]))[0])
        self.time += 1
        clamped = PValue(min(1.0, raw))
        alarm = clamped.value <= self.rule.alpha
        self.alarms += alarm
        return ChartStatistic(self.time, raw, clamped, alarm)

    def run(self, ps) -> list[ChartStatistic]:
        return [self.step(p) for p in ps]

    def finalize(self) -> None:
        self._final = True

    @property
    def finalized(self) -> bool:
        return self._final


def chart_step(state: Chart, p: float, rule: AlarmRule | None = None) -> ChartStatistic:
    """Advance ``state`` by one step; ``rule`` overrides the chart's own rule if given."""
    if rule is not None and rule != state.rule:
        state.rule = rule
    return state.step(p)


def chart_statistics(kind: ChartKind, p) -> np.ndarray:
    """Raw statistics of a whole p-value sequence (batch form of :class:`Chart`)."""
    return make_processor(kind).process(clamp_pvalues(p))
