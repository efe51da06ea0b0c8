"""Command-line entry point: ``pvchart {bounds,simulate,density,localize}``.

Every flag can also come from ``--config FILE``, a text file of
``key = value`` lines whose keys are the long flag names (``max-horizon`` or
``max_horizon``).  Flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dgp
from .core import AlarmRule, EValueEwma, QBarEwma, QEwma, QTildeEwma, Raw
from .localize import METHODS, DirectionalPValues, localise
from .report import ReportError, TableRow, emit_csv, emit_table
from .run_length import (
    DEFAULT_MAX_HORIZON,
    RunLengthConfig,
    estimate_run_lengths,
    karl_bound_conditional,
    karl_bound_superuniform,
    simulate_localisation,
)
from .uniform_ewma import UniformEwmaSpec

log = logging.getLogger("pvchart")

SCENARIOS = ("iid-uniform", "one-phase-normal", "two-phase-normal", "ar1", "ks",
             "mv-normal", "mv-cauchy")
CHARTS = ("raw", "q", "qtilde", "qbar", "e")

# scenario-specific flags; anything else given for a scenario is an error
SCENARIO_FLAGS = {
    "iid-uniform": set(),
    "one-phase-normal": {"delta"},
    "two-phase-normal": {"delta"},
    "ar1": {"beta", "delta", "ar1_pvalue"},
    "ks": {"n0", "ooc", "ooc_param", "ks_mode"},
    "mv-normal": {"delta", "rho", "method", "fwe_reps"},
    "mv-cauchy": {"delta", "rho", "n0", "method", "fwe_reps"},
}
OPTIONAL_FLAGS = {"delta", "rho", "beta", "n0", "ooc", "ooc_param", "ks_mode", "ar1_pvalue",
                  "method", "fwe_reps"}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _precision(text: str):
    if text == "full":
        return "full"
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("precision must be an integer or 'full'") from exc
    if value < 1:
        raise argparse.ArgumentTypeError("precision must be positive")
    return value


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="pvchart", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file mirroring the flags")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at debug level")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("bounds", help="closed-form ARL / k-ARL lower bounds")
    p.add_argument("--alpha", type=float, required=False)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--conditional", action="store_true",
                   help="bound for conditionally super-uniform p-values (k / alpha)")
    subs["bounds"] = p

    p = sub.add_parser("simulate", help="Monte Carlo run lengths, CSV output")
    p.add_argument("--scenario", choices=SCENARIOS, default="iid-uniform")
    p.add_argument("--chart", type=lambda s: s.split(","), default=["raw"],
                   help=f"comma list of {', '.join(CHARTS)}")
    p.add_argument("--alpha", type=_floats, default=[0.05], help="comma list allowed")
    p.add_argument("--k", type=_ints, default=[1], help="comma list allowed")
    p.add_argument("--lambda", dest="lam", type=_floats, default=None,
                   help="EWMA smoothing weight(s) for q/qtilde/qbar/e charts")
    p.add_argument("--r", type=_floats, default=None, help="merging exponent(s)")
    p.add_argument("--e-beta", dest="e_beta", type=float, default=0.5,
                   help="calibrator exponent for the e chart")
    p.add_argument("--beta", type=float, default=None, help="AR(1) coefficient")
    p.add_argument("--ar1-pvalue", dest="ar1_pvalue", choices=("marginal", "sup"), default=None)
    p.add_argument("--n0", type=int, default=None, help="Phase-I sample size")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--ooc", choices=dgp.KS_OOC, default=None, help="KS current-sample law")
    p.add_argument("--ooc-param", dest="ooc_param", type=float, default=None)
    p.add_argument("--ks-mode", dest="ks_mode", choices=("exact", "asymptotic", "auto"),
                   default=None)
    p.add_argument("--method", choices=METHODS, default=None,
                   help="aggregate for mv scenarios")
    p.add_argument("--fwe-reps", dest="fwe_reps", type=int, default=None,
                   help="single-step runs for the FWE estimate (mv scenarios)")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-horizon", dest="max_horizon", type=int, default=DEFAULT_MAX_HORIZON)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="-")
    p.add_argument("--precision", type=_precision, default=None)
    subs["simulate"] = p

    p = sub.add_parser("density", help="exact PDF/CDF of the uniform EWMA")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--u0", type=float, default=0.5)
    p.add_argument("--grid", type=int, default=201, help="points on [0, 1]")
    p.add_argument("--plot-data", dest="plot_data", action="store_true",
                   help="add the uniform CDF column for plotting")
    p.add_argument("--out", default="-")
    p.add_argument("--precision", type=_precision, default=None)
    subs["density"] = p

    p = sub.add_parser("localize", help="directional localisation of one-sided p-value pairs")
    p.add_argument("--input", default=None,
                   help="CSV with columns p_le_1, p_ge_1, ... and optional time")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=METHODS, default="bonferroni")
    p.add_argument("--stop-at-first", dest="stop_at_first", action="store_true",
                   help="stop after the first alarm")
    p.add_argument("--out", default="-")
    p.add_argument("--precision", type=_precision, default=None)
    subs["localize"] = p
    return parser, subs


def read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    dests = {a.dest: a for a in sub._actions}
    aliases = {"lambda": "lam"}
    defaults = {}
    for key, value in config.items():
        dest = aliases.get(key, key)
        action = dests.get(dest)
        if action is None or dest == "help":
            raise UsageError(f"unknown config key {key!r}")
        if action.nargs == 0:  # store_true flags
            defaults[dest] = _bool(value)
        else:
            try:
                defaults[dest] = action.type(value) if action.type else value
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
            if action.choices is not None and defaults[dest] not in action.choices:
                raise UsageError(f"config key {key!r}: invalid choice {value!r}")
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        command = next((a for a in rest if a in subs), None)
        if command is None:
            parser.parse_args(argv)  # reports the missing subcommand
        _apply_config(subs[command], read_config(known.config))
    return parser.parse_args(argv)


# --- subcommands ----------------------------------------------------------


def _cmd_bounds(args) -> int:
    if args.alpha is None:
        raise UsageError("--alpha is required")
    if args.conditional:
        value = karl_bound_conditional(args.alpha, args.k)
    else:
        value = karl_bound_superuniform(args.alpha, args.k)
    print(f"{value:.12g}")
    return 0


def _chart_kinds(args) -> list:
    kinds = []
    for name in args.chart:
        name = name.strip()
        if name not in CHARTS:
            raise UsageError(f"unknown chart {name!r}; expected one of {', '.join(CHARTS)}")
        if name == "raw":
            kinds.append(Raw())
            continue
        if not args.lam:
            raise UsageError(f"chart {name!r} needs --lambda")
        if name == "e":
            kinds.extend(EValueEwma(lam, args.e_beta) for lam in args.lam)
            continue
        if not args.r:
            raise UsageError(f"chart {name!r} needs --r")
        cls = {"q": QEwma, "qtilde": QTildeEwma, "qbar": QBarEwma}[name]
        for lam in args.lam:
            for r in args.r:
                if name == "qbar" and r < 1:
                    raise UsageError(f"chart qbar requires r >= 1 (got r={r:g})")
                kinds.append(cls(lam, r))
    return kinds


def _check_scenario_flags(args) -> None:
    allowed = SCENARIO_FLAGS[args.scenario]
    for flag in sorted(OPTIONAL_FLAGS - allowed):
        if getattr(args, flag) is not None:
            raise UsageError(
                f"--{flag.replace('_', '-')} does not apply to scenario {args.scenario!r}"
            )
    if args.scenario == "mv-cauchy" and args.n0 is None:
        raise UsageError("scenario 'mv-cauchy' needs --n0")
    if args.ooc_param is not None and args.ooc in (None, "none", "cauchy"):
        raise UsageError("--ooc-param needs --ooc shift, scale, dyn_mean or dyn_var")


def _source(args):
    delta = 0.0 if args.delta is None else args.delta
    s = args.scenario
    if s == "iid-uniform":
        return dgp.IIDUniform()
    if s == "one-phase-normal":
        return dgp.OnePhaseNormal(delta)
    if s == "two-phase-normal":
        return dgp.TwoPhaseNormal(delta)
    if s == "ar1":
        beta = 0.0 if args.beta is None else args.beta
        return dgp.AR1(beta, delta, args.ar1_pvalue or "marginal")
    if s == "ks":
        return dgp.KSScenario(50 if args.n0 is None else args.n0, args.ooc or "none",
                              args.ooc_param, args.ks_mode or "auto")
    family = "normal" if s == "mv-normal" else "cauchy"
    return dgp.MultivariateSource(family, delta, 0.0 if args.rho is None else args.rho, args.n0)


def _chart_fields(kind) -> dict:
    if isinstance(kind, Raw):
        return {"chart": "raw"}
    if isinstance(kind, EValueEwma):
        return {"chart": "e", "lam": kind.lam, "e_beta": kind.beta}
    return {"chart": kind.variant.value, "lam": kind.lam, "r": kind.r}


def _source_fields(source) -> dict:
    return dict(source.labels())


def _cmd_simulate(args) -> int:
    _check_scenario_flags(args)
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    if args.max_horizon < 1:
        raise UsageError("--max-horizon must be positive")
    if args.threads < 1:
        raise UsageError("--threads must be positive")
    try:
        source = _source(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    base = {"scenario": args.scenario, **_source_fields(source)}
    rows = []
    if args.scenario.startswith("mv-"):
        if args.chart != ["raw"] or args.lam or args.r:
            raise UsageError("mv scenarios run the localisation procedure; chart flags do not apply")
        method = args.method or "bonferroni"
        for alpha in args.alpha:
            if not 0 < alpha < 1:
                raise UsageError("--alpha must lie in (0, 1)")
            summary = simulate_localisation(source, alpha, args.reps, args.seed, method,
                                            args.max_horizon,
                                            10_000 if args.fwe_reps is None else args.fwe_reps)
            rows.append(TableRow(**base, alpha=alpha, reps=args.reps, censored=summary.censored,
                                 mean=summary.mean_run_length, st_err=summary.se_run_length,
                                 mean_ooc=summary.mean_ooc, mean_fwe=summary.one_step_fwe))
    else:
        kinds = _chart_kinds(args)
        try:
            configs = [RunLengthConfig(kind, AlarmRule(a, k))
                       for kind in kinds for a in args.alpha for k in args.k]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        results = estimate_run_lengths(source, configs, args.reps, args.seed,
                                       args.max_horizon, args.threads)
        for res in results:
            s = res.summary
            if s.censored:
                log.warning("%s alpha=%g k=%d: %d of %d runs censored at horizon %d",
                            res.config.kind.label(), res.config.rule.alpha, res.config.rule.k,
                            s.censored, s.reps, args.max_horizon)
            rows.append(TableRow(**base, **_chart_fields(res.config.kind),
                                 alpha=res.config.rule.alpha, k=res.config.rule.k,
                                 reps=s.reps, censored=s.censored, mean=s.mean,
                                 st_err=s.std_error, bound=s.bound, ratio=s.ratio))
    emit_csv(rows, args.out, args.precision)
    return 0


def _cmd_density(args) -> int:
    if args.lam is None or args.t is None:
        raise UsageError("density needs --lambda and --t")
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    try:
        spec = UniformEwmaSpec(args.lam, args.t, args.u0)
        u = np.linspace(0.0, 1.0, args.grid)
        f = spec.pdf(u)
        F = spec.cdf(u)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.plot_data:
        emit_table(("u", "pdf", "cdf", "uniform_cdf"), zip(u, f, F, u), args.out, args.precision)
    else:
        emit_table(("u", "pdf", "cdf"), zip(u, f, F), args.out, args.precision)
    return 0


def read_directional_csv(path: str) -> tuple[list, np.ndarray, np.ndarray]:
    """Parse ``time?, p_le_1, p_ge_1, ..., p_le_d, p_ge_d`` rows."""
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            records = list(csv.DictReader(handle))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not records:
        return [], np.empty((0, 0)), np.empty((0, 0))
    header = list(records[0].keys())
    d = 0
    while f"p_le_{d + 1}" in header and f"p_ge_{d + 1}" in header:
        d += 1
    if d == 0:
        raise UsageError(f"{path}: expected columns p_le_1, p_ge_1, ...")
    times, le, ge = [], [], []
    for line, rec in enumerate(records, 2):
        try:
            le.append([float(rec[f"p_le_{j}"]) for j in range(1, d + 1)])
            ge.append([float(rec[f"p_ge_{j}"]) for j in range(1, d + 1)])
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{path}:{line}: bad p-value ({exc})") from exc
        times.append(rec["time"] if "time" in rec else line - 1)
    return times, np.array(le), np.array(ge)


def _cmd_localize(args) -> int:
    if args.input is None:
        raise UsageError("localize needs --input")
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    times, le, ge = read_directional_csv(args.input)
    out = []
    for t, a, b in zip(times, le, ge):
        try:
            rep = localise(DirectionalPValues(a, b), args.alpha, args.method)
        except ValueError as exc:
            raise UsageError(f"time {t}: {exc}") from exc
        rejected = ";".join(str(j + 1) for j in sorted(rep.rejected))
        out.append((t, rep.aggregate, rep.alarm, rejected, rep.format_directions()))
        if rep.alarm and args.stop_at_first:
            break
    emit_table(("time", "aggregate", "alarm", "rejected", "directions"), out, args.out,
               args.precision)
    return 0


COMMANDS = {
    "bounds": _cmd_bounds,
    "simulate": _cmd_simulate,
    "density": _cmd_density,
    "localize": _cmd_localize,
}


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"pvchart: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse already printed its diagnostic
        return int(exc.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("pvchart: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.propagate = False
    try:
        return _dispatch(args)
    finally:
        log.removeHandler(handler)


def _dispatch(args) -> int:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    log.info("resolved config: %s", resolved)
    if "seed" in resolved:
        log.info("seed: %d", resolved["seed"])
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, ReportError) as exc:
        print(f"pvchart: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
