"""Command-line entry point.

Every option can also be given in an INI-style config file (``--config``),
one section per command, keys spelled like the long options with or without
dashes. Command-line flags override the file. Exit codes: 0 success,
2 usage or configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sgmod import io
from sgmod.capacity import (Receiver, SweepSpec, c_eff, ebn0_of, sic_threshold, sweep_fig2,
                            theorem1_rate)
from sgmod.core import awgn_capacity_fixed_point
from sgmod.density import Mode, Model, SystemParams, run_de
from sgmod.errors import ConfigurationError, DomainError
from sgmod.linksim import LinkSimConfig, compare_with_de, run_linksim

OUTPUT_DIR_ENV = "SGMOD_OUTPUT_DIR"
COMMANDS = ("de", "sic", "linksim", "capacity", "sweep")


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# name -> (type, default, help); default None means required
_DE_OPTS = {
    "alpha": (float, None, "system load K/N"),
    "sigma2": (float, None, "noise power"),
    "theta": (float, math.inf, "code threshold (SINR); inf disables decoding"),
    "mode": (str, "pic", "receiver: pic (two-stage) or sic (modified SIC)"),
    "model": (str, "continuous", "time model: continuous or discrete"),
    "w": (int, 2, "coupling half-window W (discrete model)"),
    "t-min": (float, -1.0, "left end of the continuous grid"),
    "t-max": (float, None, "right end of the grid (default 40 continuous, 10(2W+1) discrete)"),
    "dt": (float, 1e-3, "continuous grid spacing"),
    "max-iter": (int, 100, "maximum number of iterations"),
    "t-stride": (int, 1, "write every n-th grid point to the trajectory file"),
}
_LINKSIM_OPTS = {
    "n-dims": (int, 200, "signal dimensions N"),
    "m-substreams": (int, 16, "replicas per bit M"),
    "k-streams": (int, 200, "total data streams K"),
    "w": (int, 2, "coupling half-window W"),
    "l-bits": (int, 200, "bits per packet L (multiple of 2W+1)"),
    "sigma2": (float, 0.5, "noise power per dimension"),
    "power": (float, 1.0, "power per modulated stream"),
    "seed": (int, 0, "random seed of the first trial"),
    "iterations": (int, 5, "receiver iterations"),
    "slots": (int, 20, "slots whose packets are detected"),
    "trials": (int, 1, "independent trials (seeds seed..seed+trials-1)"),
    "mode": (str, "pic", "receiver: pic or sic"),
    "theta": (float, math.inf, "SIC decoding threshold"),
    "frozen-tail": (_bool, True, "keep undetected packets beyond the last slot"),
}
_CAPACITY_OPTS = {
    "alpha": (float, None, "system load"),
    "s": (float, None, "total system SNR alpha/sigma2"),
    "delta": (float, 0.0, "wave-speed offset for the finite-iteration rate"),
}
_SWEEP_OPTS = {
    "alphas": (_float_list, [10.0, 100.0, 500.0], "comma-separated loads"),
    "s-min": (float, 0.1, "smallest total SNR"),
    "s-max": (float, 30.0, "largest total SNR"),
    "s-points": (int, 40, "number of s values (log-spaced)"),
    "receiver": (str, "sic", "sic, two-stage or awgn"),
    "workers": (int, 1, "parallel worker processes"),
    "dt": (float, 1e-2, "grid spacing for two-stage rows"),
    "t-max": (float, 20.0, "grid length for two-stage rows"),
    "max-iter": (int, 400, "iteration cap for two-stage rows"),
}
OPTIONS = {"de": _DE_OPTS, "sic": {k: v for k, v in _DE_OPTS.items() if k != "mode"},
           "linksim": _LINKSIM_OPTS, "capacity": _CAPACITY_OPTS, "sweep": _SWEEP_OPTS}


@dataclass
class RunConfig:
    command: str
    params: dict
    output: Path
    fmt: str = "csv"
    extra: dict = field(default_factory=dict)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgmod", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {"de": "density evolution", "sic": "density evolution, modified SIC receiver",
             "linksim": "Monte Carlo link simulation", "capacity": "spectral efficiency",
             "sweep": "spectral-efficiency curves"}
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, help=helps[cmd], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", type=Path, help="INI file with a [%s] section" % cmd)
        p.add_argument("--output", "-o", type=Path,
                       help=f"output file (default: ${OUTPUT_DIR_ENV} or . / {cmd}.<format>)")
        p.add_argument("--format", choices=("csv", "json"))
        for name, (typ, default, text) in OPTIONS[cmd].items():
            shown = "required" if default is None else f"default {default}"
            p.add_argument(f"--{name}", type=typ, help=f"{text} ({shown})")
    return parser


def _read_config_file(path: Path, command: str) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"malformed config file {path}: {exc}") from None
    if not cp.has_section(command):
        return {}
    known = OPTIONS[command]
    out = {}
    for key, raw in cp.items(command):
        name = key.replace("_", "-")
        if name in ("output", "format"):
            out[name] = raw
            continue
        if name not in known:
            raise UsageError(f"unknown key {key!r} in section [{command}] of {path}")
        typ = known[name][0]
        try:
            out[name] = typ(raw)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"invalid value {raw!r} for key {key!r}") from None
    return out


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """Merge defaults, config file and flags (highest precedence last)."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    if command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    merged = {name: spec[1] for name, spec in OPTIONS[command].items()}
    if "config" in ns:
        merged.update(_read_config_file(ns.pop("config"), command))
    for dest, value in ns.items():
        merged[dest.replace("_", "-")] = value
    fmt = str(merged.pop("format", "json" if command == "linksim" else "csv"))
    if fmt not in ("csv", "json"):
        raise UsageError(f"invalid value {fmt!r} for key 'format'")
    output = merged.pop("output", None)
    if output is None:
        output = Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{command}.{fmt}"
    required = [k for k, (_, d, _) in OPTIONS[command].items() if d is None]
    for key in required:
        if merged.get(key) is None and key != "t-max":
            raise UsageError(f"missing required parameter '{key}'")
    params = {k.replace("-", "_"): v for k, v in merged.items()}
    _validate(command, params)
    return RunConfig(command=command, params=params, output=Path(output), fmt=fmt)


def _validate(command: str, p: dict) -> None:
    def need(key, ok, what):
        if not ok:
            raise UsageError(f"invalid value {p[key]!r} for key '{key.replace('_', '-')}': {what}")

    if command in ("de", "sic"):
        need("alpha", p["alpha"] > 0, "must be positive")
        need("sigma2", p["sigma2"] > 0, "must be positive")
        need("theta", p["theta"] >= 0, "must be nonnegative")
        need("dt", p["dt"] > 0, "must be positive")
        need("w", p["w"] >= 1, "must be >= 1")
        need("max_iter", p["max_iter"] >= 1, "must be >= 1")
        need("t_stride", p["t_stride"] >= 1, "must be >= 1")
        if command == "de":
            try:
                Mode.parse(p["mode"])
            except ConfigurationError:
                need("mode", False, "expected pic or sic")
        try:
            Model.parse(p["model"])
        except ConfigurationError:
            need("model", False, "expected continuous or discrete")
    elif command == "capacity":
        need("alpha", p["alpha"] > 0, "must be positive")
        need("s", p["s"] > 0, "must be positive")
        need("delta", p["delta"] >= 0, "must be nonnegative")
    elif command == "sweep":
        need("alphas", bool(p["alphas"]) and all(a > 0 for a in p["alphas"]),
             "need positive values")
        need("s_min", p["s_min"] > 0, "must be positive")
        need("s_max", p["s_max"] >= p["s_min"], "must be >= s-min")
        need("s_points", p["s_points"] >= 1, "must be >= 1")
        try:
            Receiver.parse(p["receiver"])
        except ConfigurationError:
            need("receiver", False, "expected sic, two-stage or awgn")
    elif command == "linksim":
        need("trials", p["trials"] >= 1, "must be >= 1")
        try:
            Mode.parse(p["mode"])
        except ConfigurationError:
            need("mode", False, "expected pic or sic")


# -- commands --------------------------------------------------------------

def _run_de(cfg: RunConfig):
    p = cfg.params
    mode = Mode.SIC if cfg.command == "sic" else Mode.parse(p["mode"])
    params = SystemParams(p["alpha"], p["sigma2"], w=p["w"], theta=p["theta"])
    traj = run_de(params, mode, p["model"], t_max=p["t_max"], t_min=p["t_min"], dt=p["dt"],
                  max_iter=p["max_iter"])
    return traj


def _run_capacity(cfg: RunConfig) -> dict:
    p = cfg.params
    alpha, s = p["alpha"], p["s"]
    ebn0 = ebn0_of(alpha, s)
    row = {"alpha": alpha, "s": s, "sigma2": alpha / s, "theta": sic_threshold(alpha, s),
           "c_eff": c_eff(alpha, s), "ebn0_db": ebn0.db,
           "awgn_capacity": awgn_capacity_fixed_point(ebn0),
           "awgn_limit": 0.5 * math.log2(1.0 + s)}
    if p["delta"] > 0:
        row["offset_rate"] = theorem1_rate(alpha, alpha / s, p["delta"])
    return row


def _run_sweep(cfg: RunConfig):
    p = cfg.params
    if p["s_points"] == 1:
        s_values = [p["s_min"]]
    else:
        s_values = list(np.geomspace(p["s_min"], p["s_max"], p["s_points"]))
    spec = SweepSpec(tuple(p["alphas"]), tuple(s_values), p["receiver"],
                     two_stage={"dt": p["dt"], "t_max": p["t_max"], "max_iter": p["max_iter"]})
    return sweep_fig2(spec, workers=p["workers"])


def _run_linksim(cfg: RunConfig):
    p = dict(cfg.params)
    trials, mode, theta = p.pop("trials"), p.pop("mode"), p.pop("theta")
    base = LinkSimConfig(**p)
    result = run_linksim(base, mode, theta)
    comparison = None
    if Mode.parse(mode) is Mode.PIC:
        configs = [LinkSimConfig(**{**p, "seed": p["seed"] + i}) for i in range(trials)]
        comparison = compare_with_de(configs)
    return result, comparison


def emit_results(result, cfg: RunConfig) -> str:
    """Write the result file(s) and return the one-line summary."""
    out = cfg.output
    if cfg.command in ("de", "sic"):
        stride = cfg.params["t_stride"]
        summary_path = out.with_name(out.stem + ".summary.json")
        if cfg.fmt == "csv":
            io.write_trajectory_csv(result, out, stride)
        else:
            io.write_json(io.trajectory_json(result, stride), out)
        io.write_json(io.trajectory_summary(result), summary_path)
        speeds = result.speed[np.isfinite(result.speed)]
        tail = speeds[-5:].mean() if speeds.size else math.nan
        return (f"{result.mode.value}: {result.iterations} iterations, front "
                f"{result.front[-1]:.6g}, mean speed (last 5) {tail:.6g}, "
                f"converged={result.converged}, stalled={result.stalled}")
    if cfg.command == "capacity":
        if cfg.fmt == "csv":
            keys = list(result)
            out.write_text(",".join(keys) + "\n" + ",".join(io.fmt(result[k]) for k in keys)
                           + "\n")
        else:
            io.write_json(result, out)
        return (f"c_eff={result['c_eff']:.6g} bits/dim at Eb/N0={result['ebn0_db']:.4g} dB "
                f"(AWGN capacity {result['awgn_capacity']:.6g})")
    if cfg.command == "sweep":
        if cfg.fmt == "csv":
            io.write_curve_csv(result, out)
        else:
            io.write_json(io.curve_json(result), out)
        best = max(result.rows, key=lambda r: r.spectral_efficiency)
        return (f"{len(result.rows)} rows, max efficiency {best.spectral_efficiency:.6g} "
                f"bits/dim at Eb/N0={best.ebn0_db:.4g} dB")
    if cfg.command == "linksim":
        res, comparison = result
        if cfg.fmt == "json":
            io.write_json(io.linksim_json(res, comparison), out)
        elif comparison is not None:
            io.write_de_comparison_csv(comparison, out)
        else:
            raise ConfigurationError("CSV output of link simulation needs mode pic")
        if comparison is not None:
            worst = float(np.max(comparison["rel_err"][1:]))
            return f"load {res.config.load:.4g}: max relative deviation from DE {worst:.4f}"
        return (f"load {res.config.load:.4g}: {res.decoded[-1].size} packets decoded after "
                f"{res.config.iterations} iterations")
    raise UsageError(f"unknown command {cfg.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"sgmod: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    runners = {"de": _run_de, "sic": _run_de, "capacity": _run_capacity,
               "sweep": _run_sweep, "linksim": _run_linksim}
    try:
        result = runners[cfg.command](cfg)
        summary = emit_results(result, cfg)
    except (ConfigurationError, DomainError) as exc:
        print(f"sgmod: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"sgmod: runtime error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
