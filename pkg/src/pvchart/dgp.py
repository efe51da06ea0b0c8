"""Seeded data-generating processes mapped to p-value streams.

A *source* is an immutable description of a scenario.  ``source.start(rng)``
draws any Phase-I quantities and returns a *stream*; ``stream.draw(n)``
returns the next ``n`` p-values.  The exact values drawn depend on how the
stream is chunked, so reproducible callers use a fixed chunk schedule.

Normal variates come from the inverse CDF applied to strictly interior
uniforms, so a given bit stream maps to the same normals everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy.signal import lfilter
from scipy.special import kolmogorov, ndtr, ndtri

from ._kernels import ks_scaled_statistics
from .sources import (
    EXACT_CUTOFF,
    ar1_sup_p,
    ks_table,
    mann_whitney_tables,
    z_two_sided_p,
)

_HALF_ULP = 2.0**-52


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms ``(k + 1/2) 2^-52`` with ``k`` uniform on ``[0, 2^52)``: never 0 or 1."""
    k = rng.integers(0, 2**52, size=size, dtype=np.int64)
    return (k + 0.5) * _HALF_ULP


def std_normal(rng: np.random.Generator, size) -> np.ndarray:
    return ndtri(open_uniform(rng, size))


def chi_square(rng: np.random.Generator, df: float, size) -> np.ndarray:
    return rng.chisquare(df, size=size)


# --- univariate sources ---------------------------------------------------


class _Stream:
    def draw(self, n: int) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class IIDUniform:
    """Exactly uniform IID p-values (the sharp case of the run-length bounds)."""

    conditional: ClassVar[bool] = True
    name: ClassVar[str] = "iid-uniform"

    def start(self, rng: np.random.Generator) -> "_IIDStream":
        return _IIDStream(lambda n: open_uniform(rng, n))

    def labels(self) -> dict:
        return {}


@dataclass(frozen=True)
class ConstantSource:
    """Emits the same p-value forever (test fixture for degenerate charts)."""

    value: float = 0.0
    conditional: ClassVar[bool] = True
    name: ClassVar[str] = "constant"

    def start(self, rng: np.random.Generator) -> "_IIDStream":
        return _IIDStream(lambda n: np.full(n, self.value))

    def labels(self) -> dict:
        return {}


class _IIDStream(_Stream):
    def __init__(self, fn):
        self._fn = fn

    def draw(self, n: int) -> np.ndarray:
        return self._fn(n)


@dataclass(frozen=True)
class OnePhaseNormal:
    """``X_t ~ N(delta, 1)`` tested against ``N(0, 1)``: ``P_t = 2(1 - Phi(|X_t|))``."""

    delta: float = 0.0
    conditional: ClassVar[bool] = True
    name: ClassVar[str] = "one-phase-normal"

    def start(self, rng: np.random.Generator) -> _IIDStream:
        return _IIDStream(lambda n: z_two_sided_p(self.delta + std_normal(rng, n)))

    def labels(self) -> dict:
        return {"delta": self.delta}


@dataclass(frozen=True)
class TwoPhaseNormal:
    """Phase-I value ``X_0`` drawn once and reused: ``Z_t = (X_t - X_0)/sqrt(2)``.

    The p-values are super-uniform but dependent through ``X_0``, hence not
    conditionally super-uniform.
    """

    delta: float = 0.0
    x0: float | None = None
    conditional: ClassVar[bool] = False
    name: ClassVar[str] = "two-phase-normal"

    def start(self, rng: np.random.Generator) -> _IIDStream:
        x0 = float(std_normal(rng, 1)[0]) if self.x0 is None else float(self.x0)

        def draw(n: int) -> np.ndarray:
            xt = self.delta + std_normal(rng, n)
            return z_two_sided_p((xt - x0) / math.sqrt(2.0))

        stream = _IIDStream(draw)
        stream.x0 = x0
        return stream

    def labels(self) -> dict:
        return {"delta": self.delta}


@dataclass(frozen=True)
class AR1:
    """Stationary AR(1) ``X_t = delta + beta X_{t-1} + eps_t`` with ``Var(eps) = 1 - beta^2``.

    ``channel='marginal'`` emits ``P'_t = 2(1 - Phi(|X_t|))`` (super-uniform
    only marginally); ``channel='sup'`` emits the sup p-value over unknown
    ``beta``, which is conditionally super-uniform.
    """

    beta: float = 0.0
    delta: float = 0.0
    channel: str = "marginal"
    name: ClassVar[str] = "ar1"

    def __post_init__(self) -> None:
        if not -1.0 < self.beta < 1.0:
            raise ValueError("AR(1) coefficient must lie in (-1, 1)")
        if self.channel not in ("marginal", "sup"):
            raise ValueError("channel must be 'marginal' or 'sup'")

    @property
    def conditional(self) -> bool:
        return self.channel == "sup"

    def start(self, rng: np.random.Generator) -> "AR1Stream":
        return AR1Stream(self, rng)

    def labels(self) -> dict:
        return {"beta": self.beta, "delta": self.delta, "pvalue": self.channel}


class AR1Stream(_Stream):
    def __init__(self, spec: AR1, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.x_prev = float(std_normal(rng, 1)[0])
        self.sigma = math.sqrt(1.0 - spec.beta**2)

    def draw_path(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` values ``X_t`` together with their lagged values ``X_{t-1}``."""
        b = self.spec.beta
        drive = self.spec.delta + self.sigma * std_normal(self.rng, n)
        x, _ = lfilter([1.0], [1.0, -b], drive, zi=[b * self.x_prev])
        lag = np.empty(n)
        lag[0] = self.x_prev
        lag[1:] = x[:-1]
        self.x_prev = float(x[-1])
        return x, lag

    def draw_dual(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        x, lag = self.draw_path(n)
        return z_two_sided_p(x), ar1_sup_p(x, lag)

    def draw(self, n: int) -> np.ndarray:
        x, lag = self.draw_path(n)
        if self.spec.channel == "sup":
            return ar1_sup_p(x, lag)
        return z_two_sided_p(x)


# --- KS two-phase scenario ------------------------------------------------

KS_OOC = ("none", "shift", "scale", "cauchy", "dyn_mean", "dyn_var")


@dataclass(frozen=True)
class KSScenario:
    """Two-phase KS chart with variable sample sizes.

    A baseline of ``n0`` standard normals is drawn once; at each step
    ``N_t ~ DiscUnif[n0 - 10, n0 + 10]`` (inclusive) observations are drawn
    from the current law and compared with the baseline by a two-sample KS
    test.

    ``ooc`` selects the current law: ``none`` (IC), ``shift`` (``N(param, 1)``),
    ``scale`` (``N(0, param)``, ``param`` a variance), ``cauchy``,
    ``dyn_mean`` (``N(mu_t, 1)``, ``mu_t ~ N(0, param)``) and ``dyn_var``
    (``N(0, s_t)``, ``s_t ~ chi^2_param``).
    """

    n0: int = 50
    ooc: str = "none"
    param: float | None = None
    mode: str = "auto"
    spread: int = 10
    conditional: ClassVar[bool] = False
    name: ClassVar[str] = "ks"

    _defaults: ClassVar[dict] = {"shift": 1.0, "scale": 2.0, "dyn_mean": 0.5, "dyn_var": 1.0}

    def __post_init__(self) -> None:
        if self.n0 <= self.spread:
            raise ValueError(f"n0 must exceed {self.spread} so sample sizes stay positive")
        if self.ooc not in KS_OOC:
            raise ValueError(f"unknown OOC law {self.ooc!r}; expected one of {KS_OOC}")
        if self.mode not in ("exact", "asymptotic", "auto"):
            raise ValueError(f"unknown KS mode {self.mode!r}")
        if self.param is None and self.ooc in self._defaults:
            object.__setattr__(self, "param", self._defaults[self.ooc])

    def start(self, rng: np.random.Generator) -> "KSStream":
        return KSStream(self, rng)

    def labels(self) -> dict:
        out = {"n0": self.n0, "ooc": self.ooc, "ks_mode": self.mode}
        if self.param is not None:
            out["ooc_param"] = self.param
        return out

    def exact_for(self, nt: np.ndarray) -> np.ndarray:
        if self.mode == "exact":
            return np.ones(nt.shape, dtype=bool)
        if self.mode == "asymptotic":
            return np.zeros(nt.shape, dtype=bool)
        return self.n0 * nt <= EXACT_CUTOFF


class KSStream(_Stream):
    def __init__(self, spec: KSScenario, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        u0 = np.sort(open_uniform(rng, spec.n0))
        self.baseline = ndtri(u0)
        # KS only sees ranks: compare on the Phi scale (IC draws stay uniforms)
        self._base_u = u0 if spec.ooc == "none" else ndtr(self.baseline)
        self.last_sizes = np.empty(0, dtype=np.int64)
        self._width = spec.n0 * (spec.n0 + spec.spread) + 1
        self._flat = np.full((2 * spec.spread + 1) * self._width, np.nan)

    def _current(self, sizes: np.ndarray) -> np.ndarray:
        """Current observations mapped through ``Phi``."""
        spec, rng = self.spec, self.rng
        total = int(sizes.sum())
        if spec.ooc == "none":
            return open_uniform(rng, total)
        if spec.ooc == "cauchy":
            return ndtr(np.tan(math.pi * (open_uniform(rng, total) - 0.5)))
        if spec.ooc in ("dyn_mean", "dyn_var"):
            if spec.ooc == "dyn_mean":
                level = math.sqrt(spec.param) * std_normal(rng, sizes.size)
            else:
                level = np.sqrt(chi_square(rng, spec.param, sizes.size))
            z = std_normal(rng, total)
            per_obs = np.repeat(level, sizes)
            return ndtr(z + per_obs if spec.ooc == "dyn_mean" else z * per_obs)
        z = std_normal(rng, total)
        if spec.ooc == "shift":
            return ndtr(z + spec.param)
        return ndtr(z * math.sqrt(spec.param))

    def draw_statistics(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Sample sizes and scaled statistics ``n0 * n_t * D`` for the next ``n`` steps."""
        spec = self.spec
        m = spec.n0
        sizes = self.rng.integers(m - spec.spread, m + spec.spread, size=n, endpoint=True)
        x = self._current(sizes)
        return sizes, ks_scaled_statistics(self._base_u, x, sizes)

    def draw(self, n: int) -> np.ndarray:
        sizes, c = self.draw_statistics(n)
        self.last_sizes = sizes
        spec = self.spec
        m = spec.n0
        p = np.empty(n)
        exact = spec.exact_for(sizes)
        if np.any(exact):
            # flat (size, statistic) -> p table, copied from the lazily filled exact tables
            row = sizes[exact] - (m - spec.spread)
            idx = row * self._width + c[exact]
            vals = self._flat[idx]
            missing = np.isnan(vals)
            if np.any(missing):
                for nt in np.unique(sizes[exact][missing]):
                    nt = int(nt)
                    tab = ks_table(m, nt)
                    tab.sf(c[exact & (sizes == nt)])
                    r = nt - (m - spec.spread)
                    self._flat[r * self._width : r * self._width + tab.size] = tab.values
                vals = self._flat[idx]
            p[exact] = vals
        if not np.all(exact):
            nt = sizes[~exact].astype(float)
            d = c[~exact] / (m * nt)
            p[~exact] = kolmogorov(np.sqrt(m * nt / (m + nt)) * d)
        return p


# --- multivariate sources -------------------------------------------------


def equicorrelation(d: int, rho: float) -> np.ndarray:
    """Cholesky factor of the equicorrelation matrix; rejects non-PD settings."""
    sigma = np.full((d, d), float(rho))
    np.fill_diagonal(sigma, 1.0)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"equicorrelation rho={rho} is not positive definite for d={d}") from exc


@dataclass(frozen=True)
class MultivariateSource:
    """``d = 3`` monitoring with mean/centre ``(delta, 0, -delta)`` and equicorrelation ``rho``.

    ``family='normal'``: one-phase Z-tests per coordinate,
    ``p_ge = 1 - Phi(Z)``, ``p_le = Phi(Z)``.

    ``family='cauchy'``: two-phase design with a baseline of ``n0`` vectors
    from the centred multivariate Cauchy law; at each step ``N_t`` vectors
    are compared per coordinate with one-sided Mann-Whitney tests
    (``p_ge`` small when the coordinate moved up).  Multivariate Cauchy
    vectors are built as ``mu + Z / sqrt(S)``, ``Z ~ N(0, Sigma)``,
    ``S ~ chi^2_1``.
    """

    family: str = "normal"
    delta: float = 0.0
    rho: float = 0.0
    n0: int | None = None
    d: int = 3
    spread: int = 10
    mw_mode: str = "auto"
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    conditional: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if self.family not in ("normal", "cauchy"):
            raise ValueError("family must be 'normal' or 'cauchy'")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.family == "cauchy":
            if self.n0 is None:
                raise ValueError("the Cauchy scenario requires n0")
            if self.n0 <= self.spread:
                raise ValueError(f"n0 must exceed {self.spread}")
        object.__setattr__(self, "chol", equicorrelation(self.d, self.rho))

    @property
    def name(self) -> str:
        return f"mv-{self.family}"

    @property
    def mean(self) -> np.ndarray:
        mu = np.zeros(self.d)
        mu[0], mu[-1] = self.delta, -self.delta
        return mu

    @property
    def truth(self) -> np.ndarray:
        """Sign of each coordinate's shift (+1 up, -1 down, 0 none)."""
        return np.sign(self.mean).astype(int)

    def labels(self) -> dict:
        out = {"delta": self.delta, "rho": self.rho}
        if self.n0 is not None:
            out["n0"] = self.n0
        return out

    def vectors(self, rng: np.random.Generator, n: int, centre: np.ndarray) -> np.ndarray:
        z = std_normal(rng, (n, self.d)) @ self.chol.T
        if self.family == "cauchy":
            z = z / np.sqrt(chi_square(rng, 1.0, n))[:, None]
        return centre + z

    def start(self, rng: np.random.Generator) -> "MultivariateStream":
        return MultivariateStream(self, rng)


class MultivariateStream:
    def __init__(self, spec: MultivariateSource, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        if spec.family == "cauchy":
            base = spec.vectors(rng, spec.n0, np.zeros(spec.d))
            self.baseline = np.sort(base, axis=0)

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``(p_le, p_ge)``, each of shape ``(n, d)``."""
        spec = self.spec
        if spec.family == "normal":
            z = spec.vectors(self.rng, n, spec.mean)
            return ndtr(z), ndtr(-z)
        m = spec.n0
        sizes = self.rng.integers(m - spec.spread, m + spec.spread, size=n, endpoint=True)
        x = spec.vectors(self.rng, int(sizes.sum()), spec.mean)
        step = np.repeat(np.arange(n), sizes)
        u = np.empty((n, spec.d), dtype=np.int64)
        for j in range(spec.d):
            below = np.searchsorted(self.baseline[:, j], x[:, j])
            u[:, j] = np.bincount(step, weights=below, minlength=n).astype(np.int64)
        p_le = np.empty((n, spec.d))
        p_ge = np.empty((n, spec.d))
        for nt in np.unique(sizes):
            sel = sizes == nt
            nt = int(nt)
            if spec.mw_mode == "exact" or (spec.mw_mode == "auto" and m * nt <= EXACT_CUTOFF):
                tab = mann_whitney_tables(m, nt)
                p_ge[sel] = tab.greater[u[sel]]
                p_le[sel] = tab.less[u[sel]]
            else:
                # continuous data: no ties, so the variance needs no correction
                mean = m * nt / 2.0
                sd = math.sqrt(m * nt * (m + nt + 1) / 12.0)
                p_ge[sel] = ndtr(-(u[sel] - mean - 0.5) / sd)
                p_le[sel] = ndtr(-(mean - u[sel] - 0.5) / sd)
        return np.minimum(p_le, 1.0), np.minimum(p_ge, 1.0)
