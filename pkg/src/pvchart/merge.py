"""Merging functions for arbitrarily dependent p-values.

The weighted generalised mean ``M_{r,w}(p) = (sum_t w_t p_t^r)^(1/r)`` becomes a
valid p-value once it is multiplied by a constant that depends on ``r`` (and,
for ``r >= 1``, on the largest weight).  Bonferroni's ``m * min(p)`` is the
other aggregator used by the localisation procedure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

WEIGHT_TOL = 1e-12


def check_exponent(r: float) -> float:
    """Validate a merging exponent: ``r > -1`` and ``r != 0``."""
    r = float(r)
    if not math.isfinite(r) or r <= -1.0:
        raise ValueError(f"merging exponent must satisfy r > -1, got {r}")
    if r == 0.0:
        raise ValueError("merging exponent r = 0 (geometric mean) is not supported")
    return r


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative weights summing to one.

    Weights that do not sum to one within ``1e-12`` are rejected rather than
    renormalised.
    """

    weights: np.ndarray
    w_max: float = field(init=False)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("weight vector must be nonempty")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1 (got {total!r})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "w_max", float(w.max()))

    def __len__(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        if m < 1:
            raise ValueError("need at least one weight")
        w = np.full(m, 1.0 / m)
        # absorb the rounding residue so the sum is exactly representable
        w[-1] = 1.0 - math.fsum(w[:-1])
        return cls(w)


def _as_weights(w: WeightVector | Sequence[float]) -> WeightVector:
    return w if isinstance(w, WeightVector) else WeightVector(np.asarray(w, dtype=float))


def _as_pvalues(p: Sequence[float], m: int) -> np.ndarray:
    arr = np.asarray(p, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("p-value list must be nonempty")
    if arr.size != m:
        raise ValueError(f"got {arr.size} p-values for {m} weights")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError("p-values must be finite and nonnegative")
    return arr


def generalized_mean(r: float, w: WeightVector | Sequence[float], p: Sequence[float]) -> float:
    """Weighted generalised mean ``(sum_t w_t p_t^r)^(1/r)``.

    For ``r < 0`` the mean is computed in log space so that tiny p-values do
    not overflow ``p^r``; any zero p-value (with positive weight) gives 0,
    the limit of the formula.
    """
    r = check_exponent(r)
    w = _as_weights(w)
    x = _as_pvalues(p, len(w))
    if r > 0:
        return float(np.dot(w.weights, x**r) ** (1.0 / r))
    live = w.weights > 0
    if np.any(x[live] == 0.0):
        return 0.0
    with np.errstate(divide="ignore"):
        log_terms = r * np.log(x[live]) + np.log(w.weights[live])
    return float(math.exp(logsumexp(log_terms) / r))


def merge_constant(r: float, w_max: float) -> float:
    """Multiplier turning ``M_{r,w}`` into a valid merging function.

    ``(1+r)^(1/r)`` for ``r in (-1, 1)``; ``min(1+r, 1/w_max)^(1/r)`` for ``r >= 1``.
    """
    r = check_exponent(r)
    if r >= 1.0:
        return min(1.0 + r, 1.0 / w_max) ** (1.0 / r)
    return (1.0 + r) ** (1.0 / r)


def valid_merge(r: float, w: WeightVector | Sequence[float], p: Sequence[float]) -> float:
    """Merged p-value ``constant * M_{r,w}(p)``, not capped at 1."""
    w = _as_weights(w)
    return merge_constant(r, w.w_max) * generalized_mean(r, w, p)


def bonferroni_merge(p: Sequence[float]) -> float:
    """Bonferroni aggregate ``min(1, m * min_j p_j)``."""
    arr = np.asarray(p, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("p-value list must be nonempty")
    return float(min(1.0, arr.size * arr.min()))
