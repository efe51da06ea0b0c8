"""Run-length bounds and Monte Carlo run-length estimation.

``R_k`` is the time of the ``k``-th alarm.  For super-uniform p-values

    E R_k >= (nu + 1)(1 - alpha nu / (2k)),   nu = floor(k / alpha),

(``1/(2 alpha) + 1/2`` when ``k = 1``); for conditionally super-uniform
p-values ``E R_k >= k / alpha``.

The simulator feeds one p-value stream per replication through every
requested chart (common random numbers), so chart comparisons are pathwise.
Replication ``i`` draws from its own generator keyed on ``(seed, i)``; results
do not depend on worker count or scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import AlarmRule, ChartKind, make_processor, preserves_conditional_validity
from .localize import (
    GE,
    LE,
    DirectionalPValues,
    aggregate_rows,
    false_directions,
    localise,
    two_sided_combine,
)

DEFAULT_MAX_HORIZON = 10**7
FIRST_CHUNK = 256
MAX_CHUNK = 1 << 16


def _check_rule(alpha: float, k: int) -> None:
    AlarmRule(alpha, k)


def arl_bound_superuniform(alpha: float) -> float:
    """ARL lower bound ``1/(2 alpha) + 1/2`` for super-uniform p-values."""
    _check_rule(alpha, 1)
    return 1.0 / (2.0 * alpha) + 0.5


def karl_bound_superuniform(alpha: float, k: int) -> float:
    """k-ARL lower bound ``(nu + 1)(1 - alpha nu / (2k))`` with ``nu = floor(k / alpha)``."""
    _check_rule(alpha, k)
    # continuous in k / alpha, so floor round-off at integers is harmless
    nu = math.floor(k / alpha)
    return (nu + 1) * (1.0 - alpha * nu / (2.0 * k))


def karl_bound_conditional(alpha: float, k: int) -> float:
    """k-ARL lower bound ``k / alpha`` for conditionally super-uniform p-values."""
    _check_rule(alpha, k)
    return k / alpha


def applicable_bound(source, kind: ChartKind, rule: AlarmRule) -> tuple[float, str]:
    """The sharpest bound the theory grants for this source/chart pair."""
    if getattr(source, "conditional", False) and preserves_conditional_validity(kind):
        return karl_bound_conditional(rule.alpha, rule.k), "conditional"
    return karl_bound_superuniform(rule.alpha, rule.k), "superuniform"


def replication_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for replication ``index`` (Philox keyed by a seed sequence)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, index))))


# --- samples and summaries ------------------------------------------------


@dataclass(frozen=True)
class RunLengthSummary:
    reps: int
    completed: int
    censored: int
    mean: float
    std_error: float
    bound: float
    bound_kind: str
    ratio: float

    @property
    def flagged(self) -> bool:
        """True when censoring makes the mean unreliable or undefined."""
        return self.censored > 0


@dataclass(frozen=True)
class RunLengthSample:
    """Observed ``R_k`` per replication; ``-1`` marks a run censored at the horizon."""

    times: np.ndarray
    max_horizon: int

    @property
    def completed_times(self) -> np.ndarray:
        return self.times[self.times > 0]

    @property
    def censored_count(self) -> int:
        return int(np.sum(self.times < 0))

    def summary(self, bound: float = math.nan, bound_kind: str = "") -> RunLengthSummary:
        done = self.completed_times.astype(float)
        n = done.size
        mean = float(done.mean()) if n else math.nan
        se = float(done.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        ratio = mean / bound if n and bound > 0 else math.nan
        return RunLengthSummary(
            reps=int(self.times.size),
            completed=n,
            censored=self.censored_count,
            mean=mean,
            std_error=se,
            bound=bound,
            bound_kind=bound_kind,
            ratio=ratio,
        )


@dataclass(frozen=True)
class RunLengthConfig:
    kind: ChartKind
    rule: AlarmRule


@dataclass(frozen=True)
class RunLengthResult:
    config: RunLengthConfig
    sample: RunLengthSample
    summary: RunLengthSummary


# --- simulation -----------------------------------------------------------


def _replicate(source, configs: Sequence[RunLengthConfig], seed: int, index: int,
               max_horizon: int) -> np.ndarray:
    rng = replication_rng(seed, index)
    stream = source.start(rng)
    kinds: list = []
    for cfg in configs:
        if cfg.kind not in kinds:
            kinds.append(cfg.kind)
    procs = [make_processor(kind) for kind in kinds]
    members = [[c for c, cfg in enumerate(configs) if cfg.kind == kind] for kind in kinds]
    counts = np.zeros(len(configs), dtype=np.int64)
    times = np.full(len(configs), -1, dtype=np.int64)
    t = 0
    chunk = FIRST_CHUNK
    pending = set(range(len(configs)))
    while pending and t < max_horizon:
        n = min(chunk, max_horizon - t)
        p = stream.draw(n)
        for proc, group in zip(procs, members):
            live = [c for c in group if c in pending]
            if not live:
                continue
            stats = proc.process(p)
            for c in live:
                rule = configs[c].rule
                hits = np.flatnonzero(stats <= rule.alpha)
                need = rule.k - counts[c]
                if hits.size >= need:
                    times[c] = t + int(hits[need - 1]) + 1
                    pending.discard(c)
                else:
                    counts[c] += hits.size
        t += n
        chunk = min(2 * chunk, MAX_CHUNK)
    return times


def _replicate_block(args) -> np.ndarray:
    source, configs, seed, indices, max_horizon = args
    return np.stack([_replicate(source, configs, seed, i, max_horizon) for i in indices])


def simulate_run_lengths(source, configs: Sequence[RunLengthConfig], reps: int, seed: int,
                         max_horizon: int = DEFAULT_MAX_HORIZON, threads: int = 1) -> np.ndarray:
    """``(reps, len(configs))`` array of ``R_k`` (``-1`` if censored)."""
    if reps < 1:
        raise ValueError("reps must be positive")
    if max_horizon < 1:
        raise ValueError("max_horizon must be positive")
    if not configs:
        raise ValueError("need at least one chart configuration")
    configs = list(configs)
    if threads <= 1:
        return _replicate_block((source, configs, seed, range(reps), max_horizon))
    blocks = np.array_split(np.arange(reps), min(reps, 4 * threads))
    jobs = [(source, configs, seed, b.tolist(), max_horizon) for b in blocks if b.size]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_replicate_block, jobs))
    return np.concatenate(parts, axis=0)


def estimate_run_lengths(source, configs: Sequence[RunLengthConfig], reps: int, seed: int,
                         max_horizon: int = DEFAULT_MAX_HORIZON,
                         threads: int = 1) -> list[RunLengthResult]:
    """Monte Carlo ``R_k`` for several charts/rules on common p-value streams."""
    table = simulate_run_lengths(source, configs, reps, seed, max_horizon, threads)
    out = []
    for c, cfg in enumerate(configs):
        sample = RunLengthSample(table[:, c].copy(), max_horizon)
        bound, kind = applicable_bound(source, cfg.kind, cfg.rule)
        out.append(RunLengthResult(cfg, sample, sample.summary(bound, kind)))
    return out


def estimate_run_length(source, kind: ChartKind, rule: AlarmRule, reps: int, seed: int,
                        max_horizon: int = DEFAULT_MAX_HORIZON,
                        threads: int = 1) -> RunLengthResult:
    """Single-chart convenience wrapper around :func:`estimate_run_lengths`."""
    return estimate_run_lengths(source, [RunLengthConfig(kind, rule)], reps, seed,
                                max_horizon, threads)[0]


# --- localisation ---------------------------------------------------------


@dataclass(frozen=True)
class LocalisationSummary:
    reps: int
    censored: int
    mean_run_length: float
    se_run_length: float
    mean_ooc: float       # correct directional detections at the alarm
    mean_fwe_at_alarm: float
    fwe_reps: int
    one_step_fwe: float   # fraction of single-step runs with a false directional claim
    one_step_fwe_se: float
    run_lengths: np.ndarray = field(repr=False)


def _correct_directions(directions, truth) -> int:
    return sum(
        (tag == GE and truth[j] > 0) or (tag == LE and truth[j] < 0) for j, tag in directions
    )


def _localise_replicate(source, alpha: float, method: str, seed: int, index: int,
                        max_horizon: int, stop_at_first: bool = True):
    rng = replication_rng(seed, index)
    stream = source.start(rng)
    truth = source.truth
    t = 0
    chunk = FIRST_CHUNK
    while t < max_horizon:
        n = min(chunk, max_horizon - t)
        le, ge = stream.draw(n)
        agg = aggregate_rows(two_sided_combine(le, ge), method)
        hits = np.flatnonzero(agg <= alpha)
        if hits.size:
            i = int(hits[0])
            rep = localise(DirectionalPValues(le[i], ge[i]), alpha, method)
            return t + i + 1, _correct_directions(rep.directions, truth), \
                false_directions(rep.directions, truth) > 0
        t += n
        chunk = min(2 * chunk, MAX_CHUNK)
    return -1, 0, False


def one_step_fwe(source, alpha: float, method: str, reps: int, seed: int) -> tuple[float, float]:
    """Frequency of a false directional claim at ``t = 1`` over independent runs."""
    truth = source.truth
    errors = 0
    for i in range(reps):
        stream = source.start(replication_rng(seed, i, stream=1))
        le, ge = stream.draw(1)
        rep = localise(DirectionalPValues(le[0], ge[0]), alpha, method)
        errors += false_directions(rep.directions, truth) > 0
    freq = errors / reps
    return freq, math.sqrt(max(freq * (1.0 - freq), 0.0) / reps)


def simulate_localisation(source, alpha: float, reps: int, seed: int, method: str = "bonferroni",
                          max_horizon: int = DEFAULT_MAX_HORIZON,
                          fwe_reps: int = 10_000) -> LocalisationSummary:
    """Run lengths to first alarm, detections at the alarm, and one-step FWE."""
    rows = [_localise_replicate(source, alpha, method, seed, i, max_horizon) for i in range(reps)]
    r = np.array([row[0] for row in rows], dtype=np.int64)
    done = r > 0
    ooc = np.array([row[1] for row in rows], dtype=float)[done]
    fwe = np.array([row[2] for row in rows], dtype=float)[done]
    n = int(done.sum())
    fwe_freq, fwe_se = one_step_fwe(source, alpha, method, fwe_reps, seed) if fwe_reps else (math.nan, math.nan)
    return LocalisationSummary(
        reps=reps,
        censored=reps - n,
        mean_run_length=float(r[done].mean()) if n else math.nan,
        se_run_length=float(r[done].std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
        mean_ooc=float(ooc.mean()) if n else math.nan,
        mean_fwe_at_alarm=float(fwe.mean()) if n else math.nan,
        fwe_reps=fwe_reps,
        one_step_fwe=fwe_freq,
        one_step_fwe_se=fwe_se,
        run_lengths=r,
    )

