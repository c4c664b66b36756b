"""Command-line front end: ``newsvendor-lab {simulate,scaling,lowerbound,verify}``.

Exit status is 0 on success, 1 on a runtime failure (including failed
verification checks) and 2 when the configuration does not validate.
"""

from __future__ import annotations

import argparse
import copy
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigFileError, atomic_write, dump_json, load_config, locate
from .cost import LinearCost
from .errors import ConfigError, ParameterDomainError
from .experiment import (
    ExperimentConfig,
    InsufficientGridError,
    default_workers,
    fit_scaling,
    log_grid,
    regret_upper_bound,
    run_experiment,
    upper_bound_constants,
)
from .lowerbound import (
    bayes_mse_check,
    fisher_single,
    prior_fisher,
    prior_fisher_quadrature,
    sweep,
    van_trees_bound,
)
from .demand import HardInstanceDemand, check_hard_instance_domain, hard_instance_breakpoints
from .policy import policy_from_config
from .rng import check_seed
from .verify import SCOPES, perturbed_factory, run_checks

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2
MANIFEST = "manifest.json"


class ValidationError(Exception):
    pass


def _unwrap_manifest(data: dict, subcommand: str) -> tuple[dict, str]:
    """A manifest can stand in for the configuration it recorded."""
    if "manifest_version" not in data:
        return data, ""
    if data.get("subcommand") != subcommand:
        raise ConfigError(f"manifest was written by {data.get('subcommand')!r}, not {subcommand!r}", "subcommand")
    if not isinstance(data.get("config"), dict):
        raise ConfigError("manifest has no 'config' object", "config")
    return data["config"], "config"


def _read(args, subcommand: str) -> tuple[dict, str, str]:
    data, text = load_config(args.config)
    try:
        cfg, offset = _unwrap_manifest(data, subcommand)
    except ConfigError as exc:
        raise locate(exc, text, str(args.config)) from exc
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        try:
            cfg["seed"] = check_seed(args.seed)
        except ValueError as exc:
            raise ConfigFileError(f"--seed: {exc}", "seed") from exc
    return cfg, text, offset


def _write_manifest(out: Path, subcommand: str, config: dict, outputs: list[str], started: float) -> None:
    manifest = {
        "manifest_version": 1,
        "tool": "newsvendor-lab",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "seed": config.get("seed"),
        "outputs": sorted(outputs),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    atomic_write(out / MANIFEST, dump_json(manifest))


def _validated(cfg: dict, text: str, source: str, offset: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_mapping(cfg)
    except ConfigError as exc:
        raise locate(exc, text, source, offset) from exc


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    cfg, text, offset = _read(args, "simulate")
    config = _validated(cfg, text, str(args.config), offset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_experiment(config, workers=args.workers)
    resolved = config.to_mapping()
    summary = {"config": resolved, "seed": config.seed, **trace.summary()}
    atomic_write(out / "trace.csv", trace.to_csv())
    atomic_write(out / "summary.json", dump_json(summary))
    _write_manifest(out, "simulate", resolved, ["trace.csv", "summary.json"], started)
    fit = summary["fit"]
    line = f"T={config.horizon} R={config.replications} cumulative regret {summary['cum_regret']:.6g}"
    if fit is not None:
        line += f", ln T slope {fit['slope']:.4g} (R^2 {fit['r2']:.4f})"
    print(line)
    return EXIT_OK


SCALING_KEYS = {"axis", "values", "experiment", "C0"}
AXIS_PARAM = {"alpha": "alpha", "beta": "beta"}


def _scaling_configs(cfg: dict) -> tuple[str, list, list[ExperimentConfig], dict]:
    extra = set(cfg) - SCALING_KEYS
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"unknown scaling key {key!r}", key)
    axis = cfg.get("axis")
    if axis not in ("T", "alpha", "beta"):
        raise ConfigError("axis must be one of \"T\", \"alpha\", \"beta\"", "axis")
    base = cfg.get("experiment")
    if not isinstance(base, dict):
        raise ConfigError("'experiment' must be an experiment configuration object", "experiment")
    c0 = cfg.get("C0", 1.0)
    if isinstance(c0, bool) or not isinstance(c0, (int, float)) or not c0 > 0:
        raise ConfigError("C0 must be a positive number", "C0")
    if axis == "T":
        try:
            return axis, [base["horizon"]], [ExperimentConfig.from_mapping(base)], {"C0": float(c0)}
        except ConfigError as exc:
            raise ConfigError(str(exc), f"experiment.{exc.path}" if exc.path else "experiment") from exc
    values = cfg.get("values")
    if not isinstance(values, list) or len(values) < 2:
        raise ConfigError(f"the {axis} axis needs a list of >= 2 values", "values")
    configs = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"values must be numbers, got {v!r}", "values")
        m = copy.deepcopy(base)
        if not isinstance(m.get("demand"), dict):
            raise ConfigError("'experiment.demand' must be an object", "experiment.demand")
        m["demand"][AXIS_PARAM[axis]] = v
        try:
            configs.append(ExperimentConfig.from_mapping(m))
        except ConfigError as exc:
            path = f"experiment.{exc.path}" if exc.path else "experiment"
            raise ConfigError(f"{axis}={v}: {exc}", path) from exc
    return axis, values, configs, {"C0": float(c0)}


def cmd_scaling(args) -> int:
    started = time.perf_counter()
    cfg, text, offset = _read(args, "scaling")
    try:
        axis, values, configs, extra = _scaling_configs(cfg)
    except ConfigError as exc:
        raise locate(exc, text, str(args.config), offset) from exc
    if axis == "T":
        grid = configs[0].grid()
        if np.sum(grid >= 100) < 4:
            raise ConfigFileError(f"{args.config}: the T axis needs >= 4 recorded periods with t >= 100", "experiment.horizon")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traces, outputs = {}, []
    for v, c in zip(values, configs):
        trace = run_experiment(c, workers=args.workers)
        traces[v] = trace
        name = "trace.csv" if axis == "T" else f"trace_{axis}={v}.csv"
        atomic_write(out / name, trace.to_csv())
        outputs.append(name)
    report = fit_scaling(traces if axis != "T" else traces[values[0]], axis=axis).to_dict()
    inst = configs[0].build()
    cost, demand = inst.cost, inst.demand
    report["upper_bound_constants"] = upper_bound_constants(
        cost.gradient_bound, cost.saa_slack, extra["C0"], demand.upper_support
    )
    report["upper_bound_constants"]["C0"] = extra["C0"]
    report["seed"] = configs[0].seed
    report["config"] = cfg
    atomic_write(out / "fit.json", dump_json(report))
    outputs.append("fit.json")
    _write_manifest(out, "scaling", cfg, outputs, started)
    for v, f in zip(report["values"], report["fits"]):
        print(f"{axis}={v:g}: ln T slope {f['slope']:.4g} (R^2 {f['r2']:.4f})")
    if report.get("slope_ratios"):
        print("slope ratio / (1/alpha) ratio:", ", ".join(f"{r:.3g}" for r in report["normalized_ratios"]))
    return EXIT_OK


LOWERBOUND_DEFAULTS = {"alpha": 0.2, "rho": 0.5, "h": 1.0, "b": 1.0, "T": 10_000, "bayes_t": [10, 100, 1000], "reps": 1000, "seed": 0, "policy": {"kind": "saa"}}


def _lowerbound_config(cfg: dict) -> dict:
    extra = set(cfg) - set(LOWERBOUND_DEFAULTS)
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"unknown lowerbound key {key!r}", key)
    out = {**LOWERBOUND_DEFAULTS, **cfg}
    for k in ("alpha", "rho", "h", "b"):
        v = out[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{k} must be a number", k)
        out[k] = float(v)
    try:
        check_hard_instance_domain(out["alpha"], out["rho"])
    except ParameterDomainError as exc:
        raise ConfigError(str(exc), "alpha") from exc
    if out["h"] <= 0 or out["b"] <= 0:
        raise ConfigError("h and b must be positive", "h" if out["h"] <= 0 else "b")
    if isinstance(out["T"], bool) or not isinstance(out["T"], int) or out["T"] < 1:
        raise ConfigError("T must be a positive integer", "T")
    ts = out["bayes_t"]
    if not isinstance(ts, list) or any(isinstance(t, bool) or not isinstance(t, int) or t < 1 for t in ts):
        raise ConfigError("bayes_t must be a list of positive integers", "bayes_t")
    if isinstance(out["reps"], bool) or not isinstance(out["reps"], int) or out["reps"] < 1000:
        raise ConfigError("reps must be an integer >= 1000", "reps")
    try:
        out["seed"] = check_seed(out["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc), "seed") from exc
    if not isinstance(out["policy"], dict):
        raise ConfigError("policy must be an object", "policy")
    return out


def cmd_lowerbound(args) -> int:
    started = time.perf_counter()
    cfg, text, offset = _read(args, "lowerbound")
    try:
        p = _lowerbound_config(cfg)
        demand = HardInstanceDemand(p["alpha"], p["rho"], 0.0)
        cost = LinearCost(p["h"], p["b"])
        try:
            policy = policy_from_config(p["policy"], cost, demand)
        except ParameterDomainError as exc:
            raise ConfigError(str(exc), "policy") from exc
        if p["policy"].get("kind") in ("clairvoyant",):
            raise ConfigError("the clairvoyant policy uses theta and is outside the van Trees bound", "policy.kind")
    except ConfigError as exc:
        raise locate(exc, text, str(args.config), offset) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vt = van_trees_bound(p["T"], p["alpha"], p["rho"], p["h"], p["b"])
    base = hard_instance_breakpoints(p["alpha"], p["rho"], 0.0)
    bayes = [bayes_mse_check(policy, t, p["alpha"], p["rho"], p["reps"], p["seed"]) for t in p["bayes_t"]]
    report = {
        "config": p,
        "seed": p["seed"],
        "van_trees": vt.to_dict(log_grid(p["T"])),
        "fisher_single": fisher_single(base),
        "prior_fisher": prior_fisher(p["alpha"]),
        "prior_fisher_quadrature": prior_fisher_quadrature(p["alpha"]),
        "sweep": sweep(p["alpha"], p["rho"]),
        "bayes_mse": [b.to_dict() for b in bayes],
    }
    atomic_write(out / "lowerbound.json", dump_json(report))
    _write_manifest(out, "lowerbound", p, ["lowerbound.json"], started)
    print(f"I(q) = {report['prior_fisher']:.10g}  I_1 = {report['fisher_single']:.10g}")
    print(f"cumulative floor {vt.cumulative:.6g} vs K6 ln T/alpha {vt.log_bound:.6g} (T={vt.T})")
    print(f"{'t':>8} {'floor':>14} {'empirical MSE':>14} {'se':>12}")
    for b in bayes:
        print(f"{b.t:>8} {b.floor:>14.6g} {b.mse:>14.6g} {b.se:>12.3g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    factory = perturbed_factory() if args.inject_fault == "breakpoint" else hard_instance_breakpoints
    results = run_checks(args.scope, factory=factory)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsvendor-lab", description="Newsvendor SAA regret simulation and verification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_opts(p, help_config):
        p.add_argument("--config", required=True, help=help_config)
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--seed", type=int, help="master seed, overrides the configuration")
        p.add_argument("--workers", type=int, default=default_workers(), help="parallel worker processes (default: CPU count)")

    run_opts(sub.add_parser("simulate", help="run one regret experiment"), "experiment configuration or manifest (JSON)")
    run_opts(sub.add_parser("scaling", help="run a T / alpha / beta grid and fit ln T slopes"), "scaling grid configuration (JSON)")
    run_opts(sub.add_parser("lowerbound", help="van Trees floors and Fisher information tables"), "lower-bound parameters (JSON)")
    v = sub.add_parser("verify", help="run the invariant suite")
    v.add_argument("--scope", choices=SCOPES, default="all")
    v.add_argument("--inject-fault", choices=["breakpoint"], help=argparse.SUPPRESS)
    return parser


COMMANDS = {"simulate": cmd_simulate, "scaling": cmd_scaling, "lowerbound": cmd_lowerbound, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) is not None and getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InsufficientGridError, ParameterDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
