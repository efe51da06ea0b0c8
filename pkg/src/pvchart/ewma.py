"""EWMA-like p-value charts and the e-value EWMA chart.

All Q-type charts share the recursion on powers of p-values

    S_1 = P_1^r,    S_t = lam * P_t^r + (1 - lam) * S_{t-1},

and differ only in the constant multiplying ``S_t^(1/r)``:

* ``Q``  uses the time-dependent ``min(1+r, 1/w_{t,max})^(1/r)`` (``r >= 1``),
* ``QTilde`` replaces ``w_{t,max}`` by ``lam`` (time-homogeneous, larger),
* ``QBar`` uses ``lam^(-1/r)`` and stays conditionally valid for ``r >= 1``.

For ``r in (-1, 1)`` the Q and QTilde constant is ``(1+r)^(1/r)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .merge import WeightVector, check_exponent, merge_constant


class Variant(enum.Enum):
    Q = "q"
    QTILDE = "qtilde"
    QBAR = "qbar"


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"smoothing weight lambda must lie in (0, 1), got {lam}")
    return lam


def ewma_weights(lam: float, t: int) -> WeightVector:
    """Weights ``w_{t,1} = (1-lam)^(t-1)``, ``w_{t,s} = lam (1-lam)^(t-s)`` for ``s >= 2``."""
    lam = check_lambda(lam)
    if t < 1:
        raise ValueError("t must be a positive integer")
    s = np.arange(1, t + 1)
    w = lam * (1.0 - lam) ** (t - s)
    w[0] = (1.0 - lam) ** (t - 1)
    return WeightVector(w)


def max_weight(lam: float, t: int | np.ndarray):
    """Closed form of ``max_s w_{t,s} = max(lam, (1-lam)^(t-1))``."""
    return np.maximum(lam, (1.0 - lam) ** (np.asarray(t) - 1.0))


def t_max(lam: float) -> int:
    """Smallest ``t`` with ``(1-lam)^(t-1) <= lam``.

    From this index on the Q and QTilde constants coincide.
    """
    lam = check_lambda(lam)
    t = 1 + math.ceil(math.log(lam) / math.log1p(-lam))
    # guard the boundary against log round-off
    while t > 1 and (1.0 - lam) ** (t - 2) <= lam:
        t -= 1
    while (1.0 - lam) ** (t - 1) > lam:
        t += 1
    return t


def q_constant(variant: Variant | str, lam: float, r: float, t: int = 1) -> float:
    """Multiplier applied to ``S_t^(1/r)`` for the given chart variant."""
    variant = Variant(variant)
    lam = check_lambda(lam)
    r = check_exponent(r)
    if variant is Variant.QBAR:
        if r < 1.0:
            raise ValueError("QBar chart requires r >= 1")
        return lam ** (-1.0 / r)
    if variant is Variant.QTILDE:
        return merge_constant(r, lam)
    if t < 1:
        raise ValueError("t must be a positive integer")
    return merge_constant(r, float(max_weight(lam, t)))


def _q_constants(variant: Variant, lam: float, r: float, t: np.ndarray) -> np.ndarray | float:
    if variant is not Variant.Q or r < 1.0:
        return q_constant(variant, lam, r)
    inv_w = 1.0 / max_weight(lam, t)
    return np.minimum(1.0 + r, inv_w) ** (1.0 / r)


def _powers(p: np.ndarray, r: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.power(p, r)


def _root(s: np.ndarray, r: float) -> np.ndarray:
    # r < 0 with s = inf (a zero p-value) has limit 0
    with np.errstate(divide="ignore", over="ignore"):
        return np.power(s, 1.0 / r)


@dataclass
class EwmaState:
    """Running state of a Q, QTilde or QBar chart."""

    lam: float
    r: float
    variant: Variant = Variant.Q
    t: int = 0
    s_value: float = 0.0

    def __post_init__(self) -> None:
        self.variant = Variant(self.variant)
        self.lam = check_lambda(self.lam)
        self.r = check_exponent(self.r)
        if self.variant is Variant.QBAR and self.r < 1.0:
            raise ValueError("QBar chart requires r >= 1")

    def constant(self, t: int | None = None) -> float:
        return q_constant(self.variant, self.lam, self.r, self.t if t is None else t)

    def step(self, p: float) -> float:
        """Advance one step and return the uncapped chart statistic."""
        x = float(_powers(np.float64(p), self.r))
        if self.t == 0:
            self.s_value = x
        else:
            self.s_value = self.lam * x + (1.0 - self.lam) * self.s_value
        self.t += 1
        return self.constant() * float(_root(np.float64(self.s_value), self.r))

    def process(self, p: np.ndarray) -> np.ndarray:
        """Vectorised equivalent of calling :meth:`step` on each element."""
        p = np.asarray(p, dtype=float)
        if p.size == 0:
            return np.empty(0)
        x = _powers(p, self.r)
        prev = x[0] if self.t == 0 else self.s_value
        lam = self.lam
        s, _ = lfilter([lam], [1.0, lam - 1.0], x, zi=[(1.0 - lam) * prev])
        t = self.t + np.arange(1, p.size + 1)
        self.t += p.size
        self.s_value = float(s[-1])
        return _q_constants(self.variant, lam, self.r, t) * _root(s, self.r)


def q_step(state: EwmaState, p: float) -> float:
    return state.step(p)


def check_calibrator(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"calibrator exponent beta must lie in (0, 1), got {beta}")
    return beta


def calibrate_p_to_e(beta: float, p):
    """Admissible p-to-e calibrator ``beta * p^(beta-1)``; ``p = 0`` maps to ``inf``."""
    beta = check_calibrator(beta)
    with np.errstate(divide="ignore"):
        e = beta * np.power(np.asarray(p, dtype=float), beta - 1.0)
    return float(e) if np.ndim(e) == 0 else e


@dataclass
class EValueState:
    """EWMA of calibrated e-values; the chart statistic is ``1 / E~``."""

    lam: float
    beta: float = 0.5
    t: int = 0
    e_value: float = 0.0

    def __post_init__(self) -> None:
        self.lam = check_lambda(self.lam)
        self.beta = check_calibrator(self.beta)

    def step(self, p: float) -> float:
        """Advance one step; returns the uncapped ``1 / E~`` (``min(1, .)`` is ``Q^e``)."""
        e = calibrate_p_to_e(self.beta, p)
        if self.t == 0:
            self.e_value = e
        else:
            self.e_value = self.lam * e + (1.0 - self.lam) * self.e_value
        self.t += 1
        with np.errstate(divide="ignore"):
            return float(np.float64(1.0) / np.float64(self.e_value))

    def process(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.size == 0:
            return np.empty(0)
        e = calibrate_p_to_e(self.beta, p)
        prev = e[0] if self.t == 0 else self.e_value
        lam = self.lam
        ee, _ = lfilter([lam], [1.0, lam - 1.0], e, zi=[(1.0 - lam) * prev])
        self.t += p.size
        self.e_value = float(ee[-1])
        with np.errstate(divide="ignore"):
            return 1.0 / ee


def e_chart_step(state: EValueState, p: float) -> float:
    """One step of the e-value chart, returning ``Q^e = min(1, 1/E~)``."""
    return min(1.0, state.step(p))
