"""Exact distribution of the EWMA of IID uniforms.

``U~_t = lam U_t + (1 - lam) U~_{t-1}`` with ``U~_0 = u0`` is a shifted weighted
sum ``(1-lam)^t u0 + sum_s a_s U_s`` with ``a_s = lam (1-lam)^(t-s)``.  Its CDF is

    F(u) = [t! prod a]^-1  sum_{S subset [t]} (-1)^|S| [u - shift - a_S]_+^t

and the PDF is the same sum with exponent ``t-1`` over ``(t-1)! prod a``.

Evaluated in floating point this alternating sum cancels catastrophically
(already ~1e50 relative for ``lam=0.9, t=12``).  Every input here is a binary
float, hence an exact dyadic rational, so we scale to integers and evaluate
the sum exactly.  Binomial expansion of ``(X - A_S)^t`` turns the sum over the
active subsets into ``t+1`` prefix sums of ``sign * A_S^j`` over subset sums
sorted ascending; those tables are built once per ``(lam, t)`` and reused for
every ``u`` and ``u0``.  The single rounding happens in the final ``int / int``
division, which Python performs correctly rounded.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import accumulate

import numpy as np

from .ewma import check_lambda

T_CAP = 16
# above this the prefix tables get large; fall back to direct summation
_TABLE_T_MAX = 13


class CapacityError(ValueError):
    """Raised when ``t`` exceeds the supported subset-sum size."""


@dataclass(frozen=True)
class _Tables:
    weights: tuple[int, ...]    # scaled a_{t,s}
    scale: int                  # common denominator D (a = A / D)
    sums: list[int]             # subset sums, ascending
    signs: list[int]
    prefix: list[list[int]] | None  # prefix[j][m] = sum_{i<m} sign_i * sums_i^j
    prod: int


def _subset_sums(weights: tuple[int, ...]) -> tuple[list[int], list[int]]:
    sums, signs = [0], [1]
    for a in weights:
        sums = sums + [s + a for s in sums]
        signs = signs + [-g for g in signs]
    order = sorted(range(len(sums)), key=sums.__getitem__)
    return [sums[i] for i in order], [signs[i] for i in order]


@lru_cache(maxsize=32)
def _tables(lam: float, t: int) -> _Tables:
    q = Fraction(lam)
    keep = 1 - q
    exact = [q * keep ** (t - s) for s in range(1, t + 1)]
    scale = math.lcm(*(a.denominator for a in exact), (keep**t).denominator)
    weights = tuple(int(a * scale) for a in exact)
    sums, signs = _subset_sums(weights)
    prefix = None
    if t <= _TABLE_T_MAX:
        prefix = []
        col = list(signs)
        for _ in range(t + 1):
            prefix.append([0, *accumulate(col)])
            col = [c * s for c, s in zip(col, sums)]
    return _Tables(weights, scale, sums, signs, prefix, math.prod(weights))


def _alternating_sum(tab: _Tables, num: int, den: int, power: int) -> int:
    """``den^power * sum_{A_S < X} sign_S (X - A_S)^power`` for ``X = num / den``."""
    if den == 1:
        m = bisect.bisect_left(tab.sums, num)
    else:
        m = bisect.bisect_right(tab.sums, num // den)
    if m == 0:
        return 0
    if tab.prefix is None:
        return sum(g * (num - den * a) ** power for a, g in zip(tab.sums[:m], tab.signs[:m]))
    total = 0
    num_pow = [1]
    for _ in range(power):
        num_pow.append(num_pow[-1] * num)
    den_pow = 1
    for j in range(power + 1):
        term = math.comb(power, j) * num_pow[power - j] * den_pow * tab.prefix[j][m]
        total += -term if j & 1 else term
        den_pow *= den
    return total


@dataclass(frozen=True)
class UniformEwmaSpec:
    """Distribution of ``U~_{lam,t}`` started from ``u0``."""

    lam: float
    t: int
    u0: float = 0.5
    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", check_lambda(self.lam))
        if int(self.t) != self.t or self.t < 1:
            raise ValueError("t must be a positive integer")
        object.__setattr__(self, "t", int(self.t))
        u0 = float(self.u0)
        if not 0.0 <= u0 <= 1.0:
            raise ValueError("u0 must lie in [0, 1]")
        object.__setattr__(self, "u0", u0)
        decay = (1.0 - self.lam) ** self.t
        object.__setattr__(self, "lower", decay * u0)
        object.__setattr__(self, "upper", 1.0 - decay * (1.0 - u0))

    @property
    def weights(self) -> np.ndarray:
        """``a_{t,s} = lam (1-lam)^(t-s)`` for ``s = 1..t``."""
        s = np.arange(1, self.t + 1)
        return self.lam * (1.0 - self.lam) ** (self.t - s)

    @property
    def shift(self) -> Fraction:
        return (1 - Fraction(self.lam)) ** self.t * Fraction(self.u0)

    def breakpoints(self) -> np.ndarray:
        """Knots of the piecewise polynomial density (shifted subset sums)."""
        tab = self._tables()
        shift = self.shift
        return np.unique([float(shift + Fraction(a, tab.scale)) for a in tab.sums])

    def _tables(self) -> _Tables:
        if self.t > T_CAP:
            raise CapacityError(
                f"t={self.t} exceeds the exact-evaluation cap {T_CAP} (2^t subset sums); "
                "use Monte Carlo instead"
            )
        return _tables(self.lam, self.t)

    def _scaled(self, u: float, tab: _Tables) -> tuple[int, int]:
        x = (Fraction(u) - self.shift) * tab.scale
        return x.numerator, x.denominator

    def cdf_scalar(self, u: float) -> float:
        tab = self._tables()
        if not math.isfinite(u):
            return 0.0 if u < 0 else 1.0
        num, den = self._scaled(u, tab)
        if num <= 0:
            return 0.0
        if num >= den * sum(tab.weights):
            return 1.0
        t = self.t
        value = _alternating_sum(tab, num, den, t) / (math.factorial(t) * tab.prod * den**t)
        return min(1.0, max(0.0, value))

    def pdf_scalar(self, u: float) -> float:
        tab = self._tables()
        if not math.isfinite(u):
            return 0.0
        num, den = self._scaled(u, tab)
        if num <= 0 or num >= den * sum(tab.weights):
            return 0.0
        t = self.t
        value = (tab.scale * _alternating_sum(tab, num, den, t - 1)) / (
            math.factorial(t - 1) * tab.prod * den ** (t - 1)
        )
        return max(0.0, value)

    def cdf(self, u):
        return _vectorise(self.cdf_scalar, u)

    def pdf(self, u):
        return _vectorise(self.pdf_scalar, u)

    def moments(self) -> tuple[float, float]:
        return moments(self)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Monte Carlo draws of ``U~_{lam,t}`` by running the recursion."""
        out = np.full(size, self.u0)
        for _ in range(self.t):
            out = self.lam * rng.random(size) + (1.0 - self.lam) * out
        return out


def _vectorise(fn, u):
    if np.ndim(u) == 0:
        return fn(float(u))
    arr = np.asarray(u, dtype=float)
    return np.array([fn(float(x)) for x in arr.ravel()]).reshape(arr.shape)


def pdf(spec: UniformEwmaSpec, u):
    return spec.pdf(u)


def cdf(spec: UniformEwmaSpec, u):
    return spec.cdf(u)


def moments(spec: UniformEwmaSpec) -> tuple[float, float]:
    """Closed-form mean and variance."""
    lam, t = spec.lam, spec.t
    decay = (1.0 - lam) ** t
    mean = 0.5 + decay * (spec.u0 - 0.5)
    var = lam * (1.0 - decay * decay) / (12.0 * (2.0 - lam))
    return mean, var


@dataclass(frozen=True)
class LeftTailReport:
    alphas: np.ndarray
    excess: np.ndarray
    max_excess: float
    passed: bool


def left_tail_check(spec: UniformEwmaSpec, alphas=None, tol: float = 1e-9) -> LeftTailReport:
    """Check ``P(U~ <= a) <= a`` on a grid of ``a`` in ``[0, 1/2]``.

    Only meaningful for ``u0 >= 1/2``; other starting points are rejected.
    """
    if spec.u0 < 0.5:
        raise ValueError("left-tail super-uniformity needs u0 >= 1/2")
    grid = np.linspace(0.0, 0.5, 500) if alphas is None else np.asarray(alphas, dtype=float)
    if np.any(grid < 0.0) or np.any(grid > 0.5):
        raise ValueError("alpha grid must lie in [0, 1/2]")
    excess = spec.cdf(grid) - grid
    worst = float(excess.max()) if excess.size else -math.inf
    return LeftTailReport(grid, excess, worst, worst <= tol)
