"""Directional and coordinate localisation at alarm time.

Per coordinate ``j`` there are two one-sided p-values: ``p_le`` tests
``theta_j >= theta_0j`` (small when the coordinate moved down) and ``p_ge``
tests ``theta_j <= theta_0j`` (small when it moved up).  The procedure

1. combines them into a two-sided ``min(1, 2 min(p_le, p_ge))``,
2. aggregates the ``d`` two-sided values into one chart p-value,
3. on alarm, runs Holm's step-down on the two-sided values and tags each
   rejected coordinate with the direction of its smaller one-sided p-value.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .merge import bonferroni_merge

LE = "<="  # coordinate decreased
GE = ">="  # coordinate increased

METHODS = ("bonferroni", "arithmetic")


@dataclass(frozen=True)
class DirectionalPValues:
    p_le: np.ndarray
    p_ge: np.ndarray

    def __post_init__(self) -> None:
        le = np.asarray(self.p_le, dtype=float).ravel()
        ge = np.asarray(self.p_ge, dtype=float).ravel()
        if le.size == 0 or le.size != ge.size:
            raise ValueError("need the same positive number of p_le and p_ge values")
        for arr in (le, ge):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ValueError("directional p-values must lie in [0, 1]")
        object.__setattr__(self, "p_le", le)
        object.__setattr__(self, "p_ge", ge)

    @property
    def d(self) -> int:
        return self.p_le.size


@dataclass(frozen=True)
class LocalisationReport:
    two_sided: np.ndarray
    aggregate: float
    alarm: bool
    rejected: frozenset[int]                 # 0-based coordinates
    directions: tuple[tuple[int, str], ...]  # (coordinate, LE or GE), sorted

    def format_directions(self) -> str:
        """``1<=;3>=`` style, 1-based coordinates."""
        return ";".join(f"{j + 1}{tag}" for j, tag in self.directions)


def two_sided_combine(p_le, p_ge):
    """``min(1, 2 min(p_le, p_ge))``; works elementwise on arrays."""
    out = np.minimum(1.0, 2.0 * np.minimum(p_le, p_ge))
    return float(out) if np.ndim(out) == 0 else out


def aggregate_p(two_sided: Sequence[float], method: str = "bonferroni") -> float:
    """Aggregate chart p-value from the per-coordinate two-sided values."""
    p = np.asarray(two_sided, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("need at least one coordinate")
    if method == "bonferroni":
        return bonferroni_merge(p)
    if method == "arithmetic":
        d = p.size
        return float(min(1.0, min(2, d) / d * p.sum()))
    raise ValueError(f"unknown aggregation method {method!r}")


def aggregate_rows(two_sided: np.ndarray, method: str = "bonferroni") -> np.ndarray:
    """Row-wise :func:`aggregate_p` for an ``(n, d)`` array."""
    d = two_sided.shape[1]
    if method == "bonferroni":
        return np.minimum(1.0, d * two_sided.min(axis=1))
    if method == "arithmetic":
        return np.minimum(1.0, min(2, d) / d * two_sided.sum(axis=1))
    raise ValueError(f"unknown aggregation method {method!r}")


def holm_reject(p: Sequence[float], alpha: float) -> frozenset[int]:
    """Holm step-down: reject the ``k*`` smallest p-values, where ``k*`` is the
    largest ``k`` with ``p_(i) <= alpha / (d - i + 1)`` for every ``i <= k``.

    Returns 0-based coordinate indices.  Equal p-values are ordered by index;
    the returned set does not depend on that order.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    arr = np.asarray(p, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("need at least one p-value")
    d = arr.size
    order = np.argsort(arr, kind="stable")
    thresholds = alpha / (d - np.arange(d))
    passed = arr[order] <= thresholds
    k = d if passed.all() else int(np.argmin(passed))
    return frozenset(int(j) for j in order[:k])


def closed_testing_oracle(p: Sequence[float], alpha: float, max_d: int = 20) -> frozenset[int]:
    """Closed testing with Bonferroni local tests, by full subset enumeration.

    ``H_j`` is rejected iff every index set containing ``j`` has
    ``min_{i in J} p_i <= alpha / |J|``.  Exponential in ``d``; a validation
    oracle only.
    """
    arr = np.asarray(p, dtype=float).ravel()
    d = arr.size
    if d == 0:
        raise ValueError("need at least one p-value")
    if d > max_d:
        raise ValueError(f"closed testing oracle limited to d <= {max_d}")
    survivors = set(range(d))
    for size in range(1, d + 1):
        for subset in combinations(range(d), size):
            if arr[list(subset)].min() > alpha / size:
                survivors.difference_update(subset)
    return frozenset(survivors)


def direction_of(p_le: float, p_ge: float) -> str:
    # ties go to "<=" (non-strict comparison)
    return LE if p_le <= p_ge else GE


def localise(dp: DirectionalPValues, alpha: float, method: str = "bonferroni") -> LocalisationReport:
    """Run the three-step localisation procedure for one time step."""
    two = two_sided_combine(dp.p_le, dp.p_ge)
    agg = aggregate_p(two, method)
    alarm = agg <= alpha
    if not alarm:
        return LocalisationReport(two, agg, False, frozenset(), ())
    rejected = holm_reject(two, alpha)
    directions = tuple((j, direction_of(dp.p_le[j], dp.p_ge[j])) for j in sorted(rejected))
    return LocalisationReport(two, agg, True, rejected, directions)


def false_directions(directions, truth: Sequence[int]) -> int:
    """Number of erroneous directional claims given the true shift signs.

    A claim ``(j, >=)`` is wrong when coordinate ``j`` did not increase, and
    ``(j, <=)`` when it did not decrease.
    """
    bad = 0
    for j, tag in directions:
        s = truth[j]
        bad += (tag == GE and s <= 0) or (tag == LE and s >= 0)
    return bad
