"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import analysis, harness
from .channel import SystemParams
from .harness import ConfigError, ExperimentConfig

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
PRESETS = ("fig3", "n-scaling", "oracle-grid", "example")


class UsageError(Exception):
    pass


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = resources.files("fadingrelay.presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise UsageError(f"override {text!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise UsageError("--config and --preset are mutually exclusive")
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
    elif args.preset:
        data = load_preset(args.preset)
    else:
        data = {}
    try:
        config = ExperimentConfig.from_dict(data)
        overrides = dict(parse_override(item) for item in args.set or [])
        if args.seed is not None:
            overrides["base_seed"] = args.seed
        if args.trials is not None:
            overrides["n_trials"] = args.trials
        return config.with_overrides(overrides) if overrides else config
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _bits(nats: float) -> float:
    return nats * analysis.NATS_TO_BITS


def _say(args, text: str = "") -> None:
    if not args.quiet:
        print(text)


def cmd_rates(args) -> int:
    params: SystemParams = build_config(args).params
    report = analysis.rate_report(params)
    regime = analysis.classify_regime(params)
    edges = analysis.hyperedge_capacities(params)
    rows = [
        ("min_cut", report.min_cut),
        ("cutset_ub", report.cutset_ub),
        ("block_markov_lb", report.block_markov_lb),
        ("R_1", regime.R_1),
        ("R_2", regime.R_2),
    ] + [(f"edge_{name}", value) for name, value in edges.items()]
    _say(args, f"{'regime':<18}{regime.tag}")
    _say(args, f"{'capacity_known':<18}{str(report.capacity_known).lower()}")
    _say(args, f"{'underspread':<18}{report.underspread_factor:.17g}")
    _say(args, f"{'quantity':<18}{'nats/s':>24}{'bits/s':>24}")
    for name, value in rows:
        _say(args, f"{name:<18}{value:>24.17g}{_bits(value):>24.17g}")
    if args.out:
        payload = {"schema_version": harness.SCHEMA_VERSION, "regime": regime.tag,
                   "capacity_known": report.capacity_known,
                   "underspread_factor": report.underspread_factor, "units": "nats/s"}
        payload.update(rows)
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = build_config(args)
    if config.sweep or config.points:
        raise UsageError("config defines a sweep; use the 'sweep' subcommand")
    rec = harness.make_record(config, point="single")
    if rec.status != "ok":
        print(f"error: {rec.error}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.out:
        harness.emit([rec], args.format, args.out)
    _say(args, f"codebook  M_R={rec.M_R} M_D={rec.M_D} M_S={rec.M_S}  "
               f"rate={rec.rate:.6g} nats/s ({_bits(rec.rate):.6g} bits/s)  regime={rec.regime}")
    _say(args, f"trials    {rec.n_trials}  sampler={rec.sampler}  seed={rec.base_seed}")
    _say(args, f"{'stage':<8}{'monte carlo':>14}{'exact':>14}{'chernoff':>14}")
    for stage in ("e11", "e12", "e2"):
        mc = getattr(rec, f"freq_{stage}")
        mc_text = "n/a" if mc is None else f"{mc:.6g}"
        _say(args, f"{stage:<8}{mc_text:>14}{getattr(rec, f'exact_p_{stage}'):>14.6g}"
                   f"{getattr(rec, f'bound_{stage}'):>14.6g}")
    _say(args, f"{'P_e':<8}{rec.p_e_hat:>14.6g}{rec.exact_p_e:>14.6g}{rec.bound_total:>14.6g}")
    _say(args, f"CI        [{rec.ci_low:.6g}, {rec.ci_high:.6g}] (+/- {rec.ci_halfwidth:.3g})"
               + ("  rate condition violated: bound clamped" if rec.bound_clamped else ""))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = build_config(args)
    try:
        harness.sweep_points(config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None

    def progress(i, total, rec):
        status = "ok" if rec.status == "ok" else f"FAILED ({rec.error})"
        if rec.status != "ok":
            print(f"warning: point {rec.point} failed: {rec.error}", file=sys.stderr)
        pe = "" if rec.p_e_hat is None else f" p_e_hat={rec.p_e_hat:.4g}"
        _say(args, f"[{i + 1}/{total}] {rec.point}{pe} {status}")

    records = harness.sweep(config, on_point=progress)
    if args.out:
        harness.emit(records, args.format, args.out)
    if all(rec.status != "ok" for rec in records):
        print("error: every sweep point failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fadingrelay",
        description="Non-coherent wideband fading relay channel: bounds and simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config file")
    common.add_argument("--preset", help=f"bundled config: {', '.join(PRESETS)}")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (dotted, repeatable)")
    common.add_argument("--out", help="output file")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--trials", type=int, help="trials per point")
    common.add_argument("--quiet", action="store_true")
    for name, func, text in (("rates", cmd_rates, "capacity bounds and regime"),
                             ("simulate", cmd_simulate, "one Monte Carlo batch"),
                             ("sweep", cmd_sweep, "Monte Carlo over a parameter grid")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
