"""Valid p-value sources: normal Z-tests, the AR(1) sup p-value, and the
two-sample Kolmogorov-Smirnov and one-sided Mann-Whitney tests.

The exact two-sample null distributions assume continuous data (no ties):
every interleaving of the two samples is then equally likely.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import kolmogorov, ndtr, ndtri

EXACT_CUTOFF = 10_000


# --- standard normal ------------------------------------------------------


def norm_cdf(x):
    """Standard normal CDF."""
    return ndtr(x)


def norm_ppf(u):
    """Standard normal quantile."""
    return ndtri(u)


def z_two_sided_p(z):
    """``2 (1 - Phi(|z|))``, evaluated as ``2 Phi(-|z|)`` to keep the tail accurate."""
    return 2.0 * ndtr(-np.abs(z))


def two_phase_normal_p(x0, xt):
    """Two-sided p-value of ``(xt - x0) / sqrt(2)``."""
    return z_two_sided_p((np.asarray(xt) - np.asarray(x0)) / math.sqrt(2.0))


def ar1_sup_p(xt, xprev):
    """Supremum over ``b in (-1, 1)`` of the AR(1) p-value ``2 Phi(-|xt - b xprev| / sqrt(1 - b^2))``.

    Closed form ``2 Phi(-sqrt([xt^2 - xprev^2]_+))``.
    """
    xt = np.asarray(xt, dtype=float)
    xprev = np.asarray(xprev, dtype=float)
    gap = np.maximum(xt * xt - xprev * xprev, 0.0)
    return 2.0 * ndtr(-np.sqrt(gap))


# --- two-sample tests -----------------------------------------------------


class TestResult(NamedTuple):
    statistic: float
    pvalue: float
    method: str  # "exact" or "asymptotic"

    @property
    def approximate(self) -> bool:
        return self.method != "exact"


def _two_samples(baseline, current) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(baseline, dtype=float).ravel()
    y = np.asarray(current, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    return x, y


def _has_ties(x: np.ndarray, y: np.ndarray) -> bool:
    pooled = np.concatenate([x, y])
    return np.unique(pooled).size < pooled.size


def ks_scaled_statistic(baseline, current) -> int:
    """``m n D`` as an exact integer, ``D = sup |F_0 - F_t|``."""
    x, y = _two_samples(baseline, current)
    x, y = np.sort(x), np.sort(y)
    pooled = np.concatenate([x, y])
    i = np.searchsorted(x, pooled, side="right")
    j = np.searchsorted(y, pooled, side="right")
    return int(np.abs(i * y.size - j * x.size).max())


def ks_exact_sf(m: int, n: int, c) -> np.ndarray:
    """``P(m n D >= c)`` under the null for each integer ``c`` in the input.

    The lattice path from ``(0, 0)`` to ``(m, n)`` is a uniformly random
    interleaving.  Probability mass is pushed diagonal by diagonal; mass that
    reaches a cell with ``|i n - j m| >= c`` is banked and removed, so the
    answer is a sum of nonnegative terms (no ``1 - x`` cancellation for tiny p).
    All requested ``c`` are handled in one vectorised sweep.
    """
    c = np.atleast_1d(np.asarray(c, dtype=np.int64))
    out = np.zeros(c.shape, dtype=float)
    live = c > 0
    out[~live] = 1.0
    if not np.any(live):
        return out
    cc = c[live][:, None]
    total = m + n
    # diagonal d holds cells (i, d - i) for i in [max(0, d - n), min(d, m)]
    mass = np.ones((cc.shape[0], 1))
    hit = np.zeros(cc.shape[0])
    lo_prev = 0
    for d in range(1, total + 1):
        lo, hi = max(0, d - n), min(d, m)
        i = np.arange(lo, hi + 1)
        new = np.zeros((cc.shape[0], i.size))
        # step in the baseline direction: (i-1, d-i) -> (i, d-i)
        src = i - 1
        ok = (src >= lo_prev) & (src <= lo_prev + mass.shape[1] - 1)
        if np.any(ok):
            k = src[ok] - lo_prev
            prob = (m - src[ok]) / (total - d + 1)
            new[:, ok] += mass[:, k] * prob
        # step in the current direction: (i, d-1-i) -> (i, d-i)
        ok = (i >= lo_prev) & (i <= lo_prev + mass.shape[1] - 1)
        if np.any(ok):
            k = i[ok] - lo_prev
            prob = (n - (d - 1 - i[ok])) / (total - d + 1)
            new[:, ok] += mass[:, k] * prob
        dev = np.abs(i * n - (d - i) * m)
        outside = dev[None, :] >= cc
        hit += np.where(outside, new, 0.0).sum(axis=1)
        new[outside] = 0.0
        mass, lo_prev = new, lo
    out[live] = np.minimum(hit, 1.0)
    return out


class KSTable:
    """Lazily filled map ``c -> P(m n D >= c)`` for fixed sample sizes."""

    def __init__(self, m: int, n: int):
        self.m, self.n = m, n
        self._p = np.full(m * n + 1, np.nan)

    def sf(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=np.int64)
        vals = self._p[c]
        missing = np.isnan(vals)
        if np.any(missing):
            # fill the whole gap: new statistics cluster, so later misses become rare
            lo, hi = int(c[missing].min()), int(c[missing].max())
            span = np.arange(lo, hi + 1)
            need = span[np.isnan(self._p[span])]
            self._p[need] = ks_exact_sf(self.m, self.n, need)
            vals = self._p[c]
        return vals

    @property
    def size(self) -> int:
        return self._p.size

    @property
    def values(self) -> np.ndarray:
        """Current table contents (NaN where not yet computed)."""
        return self._p


@lru_cache(maxsize=256)
def ks_table(m: int, n: int) -> KSTable:
    return KSTable(m, n)


def ks_asymptotic_sf(m: int, n: int, c) -> np.ndarray:
    """Kolmogorov limit ``K(sqrt(m n / (m + n)) D)``."""
    d = np.asarray(c, dtype=float) / (m * n)
    return kolmogorov(math.sqrt(m * n / (m + n)) * d)


def ks_two_sample_p(baseline, current, mode: str = "auto") -> TestResult:
    """Two-sided two-sample KS test of ``baseline`` versus ``current``.

    ``mode='auto'`` uses the exact lattice distribution when ``m n <= 10^4``
    and there are no ties, otherwise the asymptotic Kolmogorov distribution.
    With ties, ``mode='exact'`` also falls back to asymptotics and the result
    is flagged approximate.
    """
    if mode not in ("exact", "asymptotic", "auto"):
        raise ValueError(f"unknown KS mode {mode!r}")
    x, y = _two_samples(baseline, current)
    m, n = x.size, y.size
    c = ks_scaled_statistic(x, y)
    exact = mode == "exact" or (mode == "auto" and m * n <= EXACT_CUTOFF)
    if exact and _has_ties(x, y):
        exact = False
    if exact:
        p = float(ks_table(m, n).sf(np.array([c]))[0])
        return TestResult(c / (m * n), p, "exact")
    return TestResult(c / (m * n), float(ks_asymptotic_sf(m, n, c)), "asymptotic")


@lru_cache(maxsize=64)
def mann_whitney_pmf(m: int, n: int) -> np.ndarray:
    """Null pmf of ``U = #{(x, y): y > x}`` for baseline size ``m``, current size ``n``.

    Conditioning on which sample holds the largest observation gives
    ``f(i, j)[u] = j/(i+j) f(i, j-1)[u - i] + i/(i+j) f(i-1, j)[u]``.
    """
    if m < 0 or n < 0:
        raise ValueError("sizes must be nonnegative")
    # row[j] holds f(i, j) for the current i
    row = [np.ones(1) for _ in range(n + 1)]
    for i in range(1, m + 1):
        new = [np.ones(1)]
        for j in range(1, n + 1):
            f = np.zeros(i * j + 1)
            f[: row[j].size] += (i / (i + j)) * row[j]
            f[i : i + new[j - 1].size] += (j / (i + j)) * new[j - 1]
            new.append(f)
        row = new
    return row[n]


def mann_whitney_u(baseline, current) -> float:
    """``U`` counting pairs with current above baseline; ties count one half."""
    x, y = _two_samples(baseline, current)
    xs = np.sort(x)
    below = np.searchsorted(xs, y, side="left")
    at_or_below = np.searchsorted(xs, y, side="right")
    return float(below.sum() + 0.5 * (at_or_below - below).sum())


def _mw_normal(x: np.ndarray, y: np.ndarray, u: float, direction: str) -> float:
    m, n = x.size, y.size
    mean = m * n / 2.0
    _, counts = np.unique(np.concatenate([x, y]), return_counts=True)
    big_n = m + n
    tie = float((counts**3 - counts).sum())
    var = m * n / 12.0 * ((big_n + 1) - tie / (big_n * (big_n - 1))) if big_n > 1 else 0.0
    if var <= 0.0:
        return 1.0
    if direction == "greater":
        z = (u - mean - 0.5) / math.sqrt(var)
    else:
        z = (mean - u - 0.5) / math.sqrt(var)
    return float(min(1.0, ndtr(-z)))


def mann_whitney_one_sided_p(baseline, current, direction: str = "greater",
                             mode: str = "auto") -> TestResult:
    """One-sided Mann-Whitney test.

    ``direction='greater'``: small p is evidence the current sample is
    stochastically larger than the baseline; ``'less'`` the reverse.
    """
    if direction not in ("greater", "less"):
        raise ValueError(f"direction must be 'greater' or 'less', got {direction!r}")
    if mode not in ("exact", "asymptotic", "auto"):
        raise ValueError(f"unknown mode {mode!r}")
    x, y = _two_samples(baseline, current)
    u = mann_whitney_u(x, y)
    exact = mode == "exact" or (mode == "auto" and x.size * y.size <= EXACT_CUTOFF)
    if exact and not _has_ties(x, y):
        pmf = mann_whitney_pmf(x.size, y.size)
        ui = int(u)
        p = pmf[ui:].sum() if direction == "greater" else pmf[: ui + 1].sum()
        return TestResult(u, float(min(1.0, p)), "exact")
    return TestResult(u, _mw_normal(x, y, u, direction), "asymptotic")


class MannWhitneyTables:
    """Upper and lower tail tables ``P(U >= u)``, ``P(U <= u)`` for fixed sizes."""

    def __init__(self, m: int, n: int):
        pmf = mann_whitney_pmf(m, n)
        self.greater = np.minimum(np.cumsum(pmf[::-1])[::-1], 1.0)
        self.less = np.minimum(np.cumsum(pmf), 1.0)


@lru_cache(maxsize=256)
def mann_whitney_tables(m: int, n: int) -> MannWhitneyTables:
    return MannWhitneyTables(m, n)

