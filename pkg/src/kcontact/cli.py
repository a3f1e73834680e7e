"""Command-line front end: every experiment as a subcommand of a JSON config.

    kcontact run <config.json> [--threads N] [--override key=value]...
    kcontact validate <config.json>

Config layout (unknown keys are rejected):

    {
      "experiment": "uniform|basin|spectrum|spatial|front|stationary|nucleus",
      "model":    {"k": 1, "lambda": 2.0},
      "kernel":   {"type": "delta|box|gaussian|table", "b": ..., "sigma": ...,
                   "table": {"x": [...], "j": [...]}},
      "grid":     {"L": 400.0, "n": 8000},
      "ic":       {"type": "uniform|step|tanh|plug|perturbed", ...},
      "numerics": {"dt": ..., "t_end": ..., "snapshot_stride": ..., "tol": ...,
                   "resolution": ..., "n_modes": ..., "max_iter": ...,
                   "r_max": ..., "n_scan": ..., "w_lo": ..., "w_hi": ...,
                   "n_bisect": ...},
      "output":   {"prefix": "out/run1"}
    }

Exit codes: 0 success, 2 config/validation error, 3 numerical-invariant
violation.  Diagnostics go to standard error.  Outputs are CSV files plus a
JSON manifest under the configured prefix; identical configs produce
byte-identical CSVs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import core, spatial, stability, uniform
from .core import (
    BoxKernel,
    DeltaKernel,
    GaussianKernel,
    Grid1D,
    InvariantViolationError,
    ModelParams,
    NonConvergenceError,
    StepSizeError,
    FrontLostError,
    KernelSupportError,
    TableKernel,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

EXPERIMENTS = ("uniform", "basin", "spectrum", "spatial", "front", "stationary", "nucleus")

_NUMERICAL_ERRORS = (InvariantViolationError, NonConvergenceError, StepSizeError,
                     FrontLostError)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _require_keys(d: dict, allowed: set, context: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {context}")


def _get(d: dict, key: str, context: str):
    if key not in d:
        raise ConfigError(f"missing required key '{key}' in {context}")
    return d[key]


def parse_model(cfg: dict) -> ModelParams:
    _require_keys(cfg, {"k", "lambda"}, "model")
    try:
        return ModelParams(k=_get(cfg, "k", "model"), lam=_get(cfg, "lambda", "model"))
    except ValueError as err:
        raise ConfigError(f"model: {err}") from err


def parse_kernel(cfg: dict):
    _require_keys(cfg, {"type", "b", "sigma", "table"}, "kernel")
    ktype = _get(cfg, "type", "kernel")
    try:
        if ktype == "delta":
            return DeltaKernel()
        if ktype == "box":
            return BoxKernel(half_width=_get(cfg, "b", "kernel (box)"))
        if ktype == "gaussian":
            return GaussianKernel(width=_get(cfg, "sigma", "kernel (gaussian)"))
        if ktype == "table":
            tab = _get(cfg, "table", "kernel (table)")
            _require_keys(tab, {"x", "j"}, "kernel.table")
            return TableKernel(_get(tab, "x", "kernel.table"), _get(tab, "j", "kernel.table"))
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"kernel: {err}") from err
    raise ConfigError(f"unknown kernel type '{ktype}'")


def parse_grid(cfg: dict) -> Grid1D:
    _require_keys(cfg, {"L", "n"}, "grid")
    try:
        return Grid1D(L=_get(cfg, "L", "grid"), n=_get(cfg, "n", "grid"))
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from err


_IC_KEYS = {"type", "v", "x0", "alpha", "center", "width", "base", "amplitude", "mode"}


def parse_ic(cfg: dict) -> dict:
    _require_keys(cfg, _IC_KEYS, "ic")
    ic_type = _get(cfg, "type", "ic")
    if ic_type not in ("uniform", "step", "tanh", "plug", "perturbed"):
        raise ConfigError(f"unknown ic type '{ic_type}'")
    return cfg


_NUMERICS_KEYS = {"dt", "t_end", "snapshot_stride", "tol", "resolution", "n_modes",
                  "max_iter", "r_max", "n_scan", "w_lo", "w_hi", "n_bisect"}


def parse_numerics(cfg: dict) -> dict:
    _require_keys(cfg, _NUMERICS_KEYS, "numerics")
    return cfg


def load_config(path: str, overrides: list[str] | None = None) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override '{ov}' must have the form key=value")
        keypath, raw = ov.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = keypath.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path '{keypath}' crosses a non-object")
        node[parts[-1]] = value
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    _require_keys(cfg, {"experiment", "model", "kernel", "grid", "ic", "numerics", "output"},
                  "top level")
    experiment = _get(cfg, "experiment", "top level")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{experiment}'")
    parse_model(_get(cfg, "model", "top level"))
    if "kernel" in cfg:
        parse_kernel(cfg["kernel"])
    if "grid" in cfg:
        parse_grid(cfg["grid"])
    if "ic" in cfg:
        parse_ic(cfg["ic"])
    if "numerics" in cfg:
        parse_numerics(cfg["numerics"])
    out = _get(cfg, "output", "top level")
    _require_keys(out, {"prefix"}, "output")
    _get(out, "prefix", "output")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _prefix(cfg: dict) -> Path:
    prefix = Path(cfg["output"]["prefix"])
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    return prefix


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _spatial_ic_field(cfg: dict, params: ModelParams, grid: Grid1D) -> spatial.Field:
    ic = cfg.get("ic")
    if ic is None:
        raise ConfigError("this experiment requires an 'ic' section")
    ic_type = ic["type"]
    if ic_type == "uniform":
        v = core.check_simplex(_get(ic, "v", "ic (uniform)"))
        if v.size != params.k + 1:
            raise ConfigError(f"ic.v has length {v.size}, expected {params.k + 1}")
        return spatial.uniform_field(grid, v)
    if ic_type == "step":
        s = spatial.StepIC(x0=_get(ic, "x0", "ic (step)")).profile(grid)
    elif ic_type == "tanh":
        s = spatial.TanhIC(alpha_front=_get(ic, "alpha", "ic (tanh)"),
                           x0=_get(ic, "x0", "ic (tanh)")).profile(grid)
    elif ic_type == "plug":
        s = spatial.PlugIC(center=ic.get("center", grid.L / 2.0),
                           width=_get(ic, "width", "ic (plug)")).profile(grid)
    elif ic_type == "perturbed":
        base = ic.get("base", (params.lam - 1.0) / params.lam if params.lam > 1 else 0.5)
        amp = ic.get("amplitude", 0.1)
        mode = ic.get("mode", 1)
        prof = base * (1.0 + amp * np.cos(2.0 * math.pi * mode * grid.x() / grid.L))
        vbar_k = spatial.sustaining_state(params)[-1]
        s = np.clip(prof / vbar_k, 0.0, 1.0)
    else:
        raise ConfigError(f"ic type '{ic_type}' not supported for spatial experiments")
    return spatial.blend_field(grid, params, s)


def run_uniform(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    ic = cfg.get("ic") or {}
    if ic.get("type") != "uniform":
        raise ConfigError("uniform experiment requires ic.type = 'uniform'")
    v0 = core.check_simplex(_get(ic, "v", "ic"))
    num = cfg.get("numerics") or {}
    dt = num.get("dt", 1e-3)
    t_end = _get(num, "t_end", "numerics")
    stride = num.get("snapshot_stride", 1)
    traj = uniform.simulate_uniform(params, v0, t_end, dt=dt, stride=stride)
    cls = uniform.classify(params, v0,
                           r_max=num.get("r_max", uniform.DEFAULT_R_MAX),
                           n_scan=num.get("n_scan", uniform.DEFAULT_N_SCAN))

    prefix = _prefix(cfg)
    traj_path = Path(f"{prefix}_trajectory.csv")
    header = ["t", "r"] + [f"v_{j}" for j in range(params.k + 1)]
    _write_csv(traj_path, header,
               (np.concatenate(([traj.times[i], traj.r[i]], traj.states[i]))
                for i in range(traj.times.size)))
    return {
        "outputs": [str(traj_path)],
        "invariants": {"max_sum_dev": traj.max_sum_dev,
                       "min_component": traj.min_component},
        "headline": {
            "classification": cls.outcome.value,
            "r0": None if not np.isfinite(cls.r0) else cls.r0,
            "v_k_final": float(traj.states[-1, -1]),
            "v_final": [float(v) for v in traj.states[-1]],
        },
    }


def run_basin(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    if params.k != 2:
        raise ConfigError("basin experiment is defined for k = 2")
    num = cfg.get("numerics") or {}
    resolution = num.get("resolution", 400)
    try:
        bmap = uniform.basin_map(params.lam, resolution=resolution,
                                 r_max=num.get("r_max", uniform.DEFAULT_R_MAX),
                                 n_scan=num.get("n_scan", uniform.DEFAULT_N_SCAN))
    except ValueError as err:
        raise ConfigError(str(err)) from err
    prefix = _prefix(cfg)
    path = Path(f"{prefix}_basin.csv")
    bmap.to_csv(path)
    return {
        "outputs": [str(path)],
        "headline": {"extinct_cells": bmap.extinct_count,
                     "resolution": bmap.resolution},
    }


def run_spectrum(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    kernel = parse_kernel(_get(cfg, "kernel", "spectrum experiment"))
    grid = parse_grid(_get(cfg, "grid", "spectrum experiment"))
    num = cfg.get("numerics") or {}
    n_modes = num.get("n_modes", 50)
    if params.lam <= 1:
        raise ConfigError("spectrum experiment requires lambda > 1")
    report = stability.sustaining_report(params, kernel, grid, n_modes)
    prefix = _prefix(cfg)
    path = Path(f"{prefix}_spectrum.csv")
    report.to_csv(path)
    return {
        "outputs": [str(path)],
        "headline": {"max_rate": report.max_rate, "n_modes": n_modes},
    }


def run_spatial(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    kernel = parse_kernel(_get(cfg, "kernel", "spatial experiment"))
    grid = parse_grid(_get(cfg, "grid", "spatial experiment"))
    num = cfg.get("numerics") or {}
    field = _spatial_ic_field(cfg, params, grid)
    try:
        traj = spatial.simulate_spatial(field, params, kernel,
                                        _get(num, "t_end", "numerics"),
                                        dt=num.get("dt", 1e-2),
                                        snapshot_stride=num.get("snapshot_stride", 100))
    except KernelSupportError as err:
        raise ConfigError(str(err)) from err
    prefix = _prefix(cfg)
    path = Path(f"{prefix}_field.csv")
    x = grid.x()
    header = ["t", "x"] + [f"v_{j}" for j in range(params.k + 1)]

    def rows():
        for s in range(traj.times.size):
            for i in range(grid.n):
                yield np.concatenate(([traj.times[s], x[i]], traj.fields[s, :, i]))

    _write_csv(path, header, rows())
    return {
        "outputs": [str(path)],
        "invariants": {"max_sum_dev": traj.max_sum_dev,
                       "min_component": traj.min_component},
        "headline": {"v_k_max_final": float(traj.fields[-1][-1].max()),
                     "v_k_mean_final": float(traj.fields[-1][-1].mean())},
    }


def run_front(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    kernel = parse_kernel(_get(cfg, "kernel", "front experiment"))
    grid = parse_grid(_get(cfg, "grid", "front experiment"))
    ic_cfg = cfg.get("ic") or {}
    if ic_cfg.get("type") == "step":
        ic = spatial.StepIC(x0=_get(ic_cfg, "x0", "ic (step)"))
    elif ic_cfg.get("type") == "tanh":
        ic = spatial.TanhIC(alpha_front=_get(ic_cfg, "alpha", "ic (tanh)"),
                            x0=_get(ic_cfg, "x0", "ic (tanh)"))
    else:
        raise ConfigError("front experiment requires ic.type 'step' or 'tanh'")
    num = cfg.get("numerics") or {}
    try:
        obs = spatial.measure_front(params, kernel, grid, ic,
                                    t_end=_get(num, "t_end", "numerics"),
                                    dt=num.get("dt", 0.05))
    except KernelSupportError as err:
        raise ConfigError(str(err)) from err
    prefix = _prefix(cfg)
    front_path = Path(f"{prefix}_front.csv")
    pos_path = Path(f"{prefix}_positions.csv")
    obs.to_csv(front_path, pos_path)
    return {
        "outputs": [str(front_path), str(pos_path)],
        "headline": {"velocity": obs.velocity, "alpha_fit": obs.alpha_fit,
                     "fit_residual": obs.fit_residual},
    }


def run_stationary(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    kernel = parse_kernel(_get(cfg, "kernel", "stationary experiment"))
    grid = parse_grid(_get(cfg, "grid", "stationary experiment"))
    ic = cfg.get("ic") or {}
    if ic.get("type") != "perturbed":
        raise ConfigError("stationary experiment requires ic.type = 'perturbed'")
    base = ic.get("base", (params.lam - 1.0) / params.lam)
    amp = ic.get("amplitude", 0.3)
    mode = ic.get("mode", 1)
    R0 = base * (1.0 + amp * np.cos(2.0 * math.pi * mode * grid.x() / grid.L))
    num = cfg.get("numerics") or {}
    if params.lam <= 1:
        raise ConfigError("stationary experiment requires lambda > 1")
    try:
        R = spatial.stationary_iterate(R0, kernel, params.lam, grid,
                                       tol=num.get("tol", 1e-12),
                                       max_iter=num.get("max_iter", 10_000))
    except KernelSupportError as err:
        raise ConfigError(str(err)) from err
    prefix = _prefix(cfg)
    path = Path(f"{prefix}_stationary.csv")
    _write_csv(path, ["x", "R"], zip(grid.x(), R))
    uniform_value = (params.lam - 1.0) / params.lam
    return {
        "outputs": [str(path)],
        "headline": {"sup_dev_from_uniform": float(np.abs(R - uniform_value).max()),
                     "uniform_value": uniform_value},
    }


def run_nucleus(cfg: dict) -> dict:
    params = parse_model(cfg["model"])
    kernel = parse_kernel(_get(cfg, "kernel", "nucleus experiment"))
    grid = parse_grid(_get(cfg, "grid", "nucleus experiment"))
    num = cfg.get("numerics") or {}
    if params.lam <= 1:
        raise ConfigError("nucleus experiment requires lambda > 1")
    try:
        result = spatial.nucleus_sweep(params, kernel, grid,
                                       w_lo=_get(num, "w_lo", "numerics"),
                                       w_hi=_get(num, "w_hi", "numerics"),
                                       t_end=_get(num, "t_end", "numerics"),
                                       dt=num.get("dt", 1e-2),
                                       n_bisect=num.get("n_bisect", 8))
    except KernelSupportError as err:
        raise ConfigError(str(err)) from err
    except ValueError as err:
        raise ConfigError(str(err)) from err
    prefix = _prefix(cfg)
    path = Path(f"{prefix}_nucleus.csv")
    _write_csv(path, ["width", "spreads"],
               ((t["width"], 1.0 if t["spreads"] else 0.0) for t in result["trials"]))
    return {
        "outputs": [str(path)],
        "headline": {"w_critical_estimate": result["w_critical_estimate"],
                     "w_extinct": result["w_extinct"],
                     "w_spreading": result["w_spreading"]},
    }


_RUNNERS = {
    "uniform": run_uniform,
    "basin": run_basin,
    "spectrum": run_spectrum,
    "spatial": run_spatial,
    "front": run_front,
    "stationary": run_stationary,
    "nucleus": run_nucleus,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def run(config_path: str, overrides: list[str] | None = None,
        threads: int | None = None) -> int:
    """Execute the configured experiment; returns the process exit code."""
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        result = _RUNNERS[cfg["experiment"]](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - start

    manifest = {
        "config": cfg,
        "threads": threads,
        "wall_time_s": wall,
        "outputs": result.get("outputs", []),
        "invariants": result.get("invariants", {}),
        "headline": result.get("headline", {}),
    }
    prefix = _prefix(cfg)
    manifest_path = Path(f"{prefix}_manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="kcontact",
        description="Mean-field k-stage contact process experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--threads", type=int, default=None,
                       help="cap worker threads (results are identical at any value)")
    p_run.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path config override")

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config")

    args = parser.parse_args(argv)
    if args.command == "validate":
        try:
            load_config(args.config)
        except ConfigError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        print("ok")
        return EXIT_OK
    return run(args.config, overrides=args.override, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
