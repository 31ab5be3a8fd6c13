"""Command-line runner: ``nlsground CONFIG.yaml [--output DIR]``.

The config is one YAML mapping.  Unknown keys anywhere are an error, and
the system parameters are validated before anything is computed.

    mode: sweep                # scalar | solve | sweep | omega
    system: {a: [2.05, 2.05], mu: 1.0, p: 4.0, r: 2.5, beta: 0.0}
    grid: {n_points: 4096, r_max: 40.0}
    solver: {seed: 0, restarts: 3}
    sweep: {beta_min: 1.0e-3, beta_max: 3.5, n: 64, cold_every: 10}
    output: {format: csv, name: run}
    workers: 1

Exit codes: 0 success, 2 invalid config, 3 some point did not converge
(outputs are still written, with flags), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .functionals import SystemParams
from .minimizer import VARIANTS, SolveConfig, solve_ground_state
from .radial_grid import build_grid
from .scalar_ground import scalar_level
from .sweep import PlateauNotExited, detect_beta_tilde, gamma_curve, log_beta_grid, omega_scan

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

MODES = ("scalar", "solve", "sweep", "omega")
FORMATS = ("csv", "json")

SCALAR_COLUMNS = ("a", "mu", "p", "lambda", "level", "mass_residual", "pohozaev_residual")
SWEEP_COLUMNS = ("beta", "gamma", "cross_term", "lambda1", "lambda2", "semitrivial1",
                 "semitrivial2", "converged", "pohozaev_residual", "stationarity_residual")
OMEGA_COLUMNS = ("beta12", "beta13", "beta23", "gamma123", "gamma12", "gamma13", "gamma23",
                 "pairwise_min", "in_omega", "fully_active", "converged")


class ConfigError(ValueError):
    pass


# config ------------------------------------------------------------------------

_SCHEMA = {
    "mode": None,
    "system": {"a": None, "mu": None, "p": None, "r": None, "beta": None},
    "grid": {"n_points": None, "r_max": None},
    "solver": {f: None for f in SolveConfig.__dataclass_fields__},
    "sweep": {"betas": None, "beta_min": None, "beta_max": None, "n": None,
              "cold_every": None, "refine": None},
    "omega": {"axes": None, "beta_min": None, "beta_max": None, "n": None},
    "output": {"format": None, "name": None},
    "workers": None,
}

_DEFAULTS = {
    "grid": {"n_points": 4096, "r_max": 40.0},
    "sweep": {"beta_min": 1e-3, "beta_max": 3.5, "n": 64, "cold_every": 10, "refine": True},
    "omega": {"beta_min": 1e-2, "beta_max": 5.0, "n": 16},
    "output": {"format": "csv", "name": None},
    "workers": 1,
}


def _reject_unknown(cfg, schema, where="config"):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = sorted(set(cfg) - set(schema))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(map(str, extra))}")
    for key, sub in schema.items():
        if isinstance(sub, dict) and key in cfg:
            _reject_unknown(cfg[key], sub, f"{where}.{key}")


def _num(x, name):
    # PyYAML reads "1e-3" as a string
    try:
        val = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {x!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{name} must be finite")
    return val


def _nums(x, name):
    if isinstance(x, (list, tuple)):
        return [_num(v, name) for v in x]
    return _num(x, name)


def _integer(x, name):
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ConfigError(f"{name} must be an integer")
    val = _num(x, name)
    if val != int(val):
        raise ConfigError(f"{name} must be an integer, got {x!r}")
    return int(val)


def normalize_config(raw) -> dict:
    """Check keys and types, fill defaults; returns a plain JSON-able dict."""
    if raw is None:
        raise ConfigError("config is empty")
    _reject_unknown(raw, _SCHEMA)
    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    sysraw = raw.get("system")
    if not sysraw:
        raise ConfigError("system section is required")
    need = ("a", "mu", "p") if mode == "scalar" else ("a", "mu", "p", "r")
    missing = [k for k in need if k not in sysraw]
    if missing:
        raise ConfigError(f"system is missing {', '.join(missing)}")
    system = {k: _nums(v, f"system.{k}") for k, v in sysraw.items()
              if k != "beta"}
    if "beta" in sysraw:
        b = sysraw["beta"]
        if isinstance(b, list) and b and isinstance(b[0], list):
            system["beta"] = [[_num(v, "system.beta") for v in row] for row in b]
        else:
            system["beta"] = _num(b, "system.beta")

    cfg = {"mode": mode, "system": system}
    g = {**_DEFAULTS["grid"], **(raw.get("grid") or {})}
    cfg["grid"] = {"n_points": _integer(g["n_points"], "grid.n_points"),
                   "r_max": _num(g["r_max"], "grid.r_max")}

    solver = dict(raw.get("solver") or {})
    fields = SolveConfig.__dataclass_fields__
    for key in ("max_iters", "restarts", "seed", "stall_window"):
        if key in solver:
            solver[key] = _integer(solver[key], f"solver.{key}")
    for key in ("step", "tol_energy", "tol_grad"):
        if key in solver:
            solver[key] = _num(solver[key], f"solver.{key}")
    if "variants" in solver:
        v = solver["variants"]
        if not isinstance(v, list) or not v or any(x not in VARIANTS for x in v):
            raise ConfigError(f"solver.variants must be a nonempty subset of {list(VARIANTS)}")
        solver["variants"] = tuple(v)
    base = {f: fields[f].default for f in fields}
    cfg["solver"] = {**base, **solver}
    cfg["solver"]["variants"] = list(cfg["solver"]["variants"])

    if mode == "sweep":
        s = {**_DEFAULTS["sweep"], **(raw.get("sweep") or {})}
        out = {"cold_every": _integer(s["cold_every"], "sweep.cold_every"),
               "refine": bool(s["refine"])}
        if s.get("betas") is not None:
            out["betas"] = [_num(v, "sweep.betas") for v in s["betas"]]
        else:
            out.update(beta_min=_num(s["beta_min"], "sweep.beta_min"),
                       beta_max=_num(s["beta_max"], "sweep.beta_max"),
                       n=_integer(s["n"], "sweep.n"))
        cfg["sweep"] = out
    elif raw.get("sweep") is not None:
        raise ConfigError("sweep section is only valid with mode: sweep")
    if mode == "omega":
        o = {**_DEFAULTS["omega"], **(raw.get("omega") or {})}
        if o.get("axes") is not None:
            axes = o["axes"]
            if not isinstance(axes, list) or len(axes) != 3:
                raise ConfigError("omega.axes must be three lists (beta12, beta13, beta23)")
            cfg["omega"] = {"axes": [[_num(v, "omega.axes") for v in ax] for ax in axes]}
        else:
            cfg["omega"] = {"beta_min": _num(o["beta_min"], "omega.beta_min"),
                            "beta_max": _num(o["beta_max"], "omega.beta_max"),
                            "n": _integer(o["n"], "omega.n")}
    elif raw.get("omega") is not None:
        raise ConfigError("omega section is only valid with mode: omega")

    o = {**_DEFAULTS["output"], **(raw.get("output") or {})}
    if o["format"] not in FORMATS:
        raise ConfigError(f"output.format must be csv or json, got {o['format']!r}")
    cfg["output"] = {"format": o["format"], "name": str(o["name"] or mode)}
    cfg["workers"] = _integer(raw.get("workers", _DEFAULTS["workers"]), "workers")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    _validate_compute_inputs(cfg)
    return cfg


def _validate_compute_inputs(cfg):
    """Build every object the run needs once, so bad values fail before compute."""
    try:
        build_grid(**cfg["grid"])
        solver_config(cfg)
        if cfg["mode"] == "scalar":
            for a, mu, p in _scalar_cases(cfg["system"]):
                if a <= 0 or mu <= 0:
                    raise ValueError("a and mu must be positive")
                if not 10.0 / 3.0 < p < 6.0:
                    raise ValueError(f"p = {p:g} violates 10/3 < p < 6")
        else:
            params = system_params(cfg)
            if cfg["mode"] == "sweep":
                if params.k != 2:
                    raise ValueError("sweep needs a two-component system")
                beta_grid(cfg)
            if cfg["mode"] == "omega":
                if params.k != 3:
                    raise ValueError("omega needs a three-component system")
                omega_axes(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _scalar_cases(system):
    a, mu, p = (np.atleast_1d(system[k]).astype(float) for k in ("a", "mu", "p"))
    try:
        a, mu, p = np.broadcast_arrays(a, mu, p)
    except ValueError:
        raise ValueError("system.a, mu and p lengths do not match") from None
    return list(zip(a.tolist(), mu.tolist(), p.tolist()))


def system_params(cfg) -> SystemParams:
    s = cfg["system"]
    beta = s.get("beta")
    if beta is not None and not isinstance(beta, list):
        k = np.atleast_1d(s["a"]).size
        if k == 2:
            beta = float(beta)
        elif beta == 0.0:
            beta = None
        else:
            raise ValueError("a scalar beta is only accepted for k = 2 (or 0)")
    return SystemParams(s["a"], s["mu"], s["p"], s["r"], beta)


def solver_config(cfg) -> SolveConfig:
    s = dict(cfg["solver"])
    s["variants"] = tuple(s["variants"])
    return SolveConfig(**s)


def beta_grid(cfg) -> np.ndarray:
    s = cfg["sweep"]
    if "betas" in s:
        b = np.asarray(s["betas"], dtype=float)
        if b.ndim != 1 or b.size < 1 or b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("sweep.betas must be strictly increasing and start at 0")
        return b
    return log_beta_grid(s["beta_min"], s["beta_max"], s["n"])


def omega_axes(cfg):
    o = cfg["omega"]
    if "axes" in o:
        axes = tuple(np.asarray(ax, dtype=float) for ax in o["axes"])
        for ax in axes:
            if ax.size < 1 or ax[0] != 0.0 or np.any(np.diff(ax) <= 0):
                raise ValueError("omega.axes must be strictly increasing and start at 0")
        return axes
    ax = log_beta_grid(o["beta_min"], o["beta_max"], o["n"])
    return (ax, ax, ax)


def config_hash(cfg) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path) -> dict:
    """Read and normalize a YAML config.  OSError propagates (exit 4)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    return normalize_config(raw)


# runs ----------------------------------------------------------------------------

def _run_scalar(cfg, grid, executor):
    rows = []
    for a, mu, p in _scalar_cases(cfg["system"]):
        lv = scalar_level(a, mu, p, grid)
        rows.append({"a": a, "mu": mu, "p": p, "lambda": lv.lam, "level": lv.level,
                     "mass_residual": lv.mass_residual,
                     "pohozaev_residual": lv.pohozaev_residual})
    return SCALAR_COLUMNS, rows, {}, True


def _solve_columns(k):
    cols = ["energy", "converged", "iterations", "pohozaev_residual", "label"]
    for j in range(1, k + 1):
        cols += [f"mass{j}", f"lambda{j}", f"semitrivial{j}", f"residual{j}"]
    cols += [f"cross{i + 1}{j + 1}" for i in range(k) for j in range(i + 1, k)]
    return tuple(cols)


def _run_solve(cfg, grid, executor):
    params = system_params(cfg)
    res = solve_ground_state(params, solver_config(cfg), grid, executor=executor)
    row = {"energy": res.energy, "converged": res.converged, "iterations": res.iterations,
           "pohozaev_residual": res.pohozaev_residual, "label": res.label}
    masses = res.state.masses
    for j in range(params.k):
        row[f"mass{j + 1}"] = masses[j]
        row[f"lambda{j + 1}"] = res.multipliers[j]
        row[f"semitrivial{j + 1}"] = bool(res.semitrivial_flags[j])
        row[f"residual{j + 1}"] = res.component_residuals[j]
    for i, j in params.pairs():
        row[f"cross{i + 1}{j + 1}"] = res.cross_terms[i, j]
    extra = {"near_minimizers": len(res.near_minimizers)}
    return _solve_columns(params.k), [row], extra, res.converged


def _run_sweep(cfg, grid, executor):
    params = system_params(cfg)
    curve = gamma_curve(params, beta_grid(cfg), solver_config(cfg), grid,
                        cold_every=cfg["sweep"]["cold_every"])
    extra = {"plateau": curve.plateau, "levels": curve.levels.tolist()}
    try:
        bt = detect_beta_tilde(curve, refine=cfg["sweep"]["refine"])
        extra["beta_tilde"] = {"lower": bt.lower, "upper": bt.upper}
    except PlateauNotExited as exc:
        extra["beta_tilde"] = {"error": str(exc)}
    return SWEEP_COLUMNS, list(curve.rows()), extra, bool(curve.converged.all())


def _run_omega(cfg, grid, executor):
    params = system_params(cfg)
    om = omega_scan(params, omega_axes(cfg), solver_config(cfg), grid, executor=executor)
    extra = {"levels": om.levels.tolist(), "points_in_omega": int(om.member.sum())}
    try:
        bb = om.beta_bar_23()
        extra["beta_bar_23"] = {"lower": bb.lower, "upper": bb.upper}
    except PlateauNotExited as exc:
        extra["beta_bar_23"] = {"error": str(exc)}
    return OMEGA_COLUMNS, list(om.rows()), extra, bool(om.converged.all())


_RUNNERS = {"scalar": _run_scalar, "solve": _run_solve, "sweep": _run_sweep,
            "omega": _run_omega}


def compute(cfg, workers: int = 1):
    """Run the configured mode.  Returns (columns, rows, manifest, all_converged)."""
    grid = build_grid(**cfg["grid"])
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        columns, rows, extra, ok = _RUNNERS[cfg["mode"]](cfg, grid, pool)
    finally:
        if pool is not None:
            pool.shutdown()
    manifest = {
        "tool": "nlsground",
        "version": __version__,
        "mode": cfg["mode"],
        "config_hash": config_hash(cfg),
        "grid": cfg["grid"],
        "seed": cfg["solver"]["seed"],
        "config": cfg,
        "all_converged": ok,
        "summary": _jsonable(extra),
    }
    return columns, rows, manifest, ok


# serialization -----------------------------------------------------------------

def format_value(x) -> str:
    """CSV cell: shortest round-trip decimal for floats, lowercase booleans."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()


def to_json(columns, rows, manifest) -> str:
    records = [{c: _jsonable(row[c]) for c in columns} for row in rows]
    doc = {"manifest": [manifest], "records": records}
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_outputs(outdir: Path, cfg, columns, rows, manifest) -> list:
    outdir.mkdir(parents=True, exist_ok=True)
    name = cfg["output"]["name"]
    paths = []
    if cfg["output"]["format"] == "csv":
        paths.append(outdir / f"{name}.csv")
        paths[-1].write_bytes(to_csv(columns, rows).encode("utf-8"))
        paths.append(outdir / f"{name}.manifest.json")
        text = json.dumps(manifest, indent=2) + "\n"
        paths[-1].write_bytes(text.encode("utf-8"))
    else:
        paths.append(outdir / f"{name}.json")
        paths[-1].write_bytes(to_json(columns, rows, manifest).encode("utf-8"))
    return paths


def _workers(cfg) -> int:
    env = os.environ.get("NLS_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"NLS_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("NLS_THREADS must be >= 1")
        return n
    return cfg["workers"]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nlsground", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="YAML run configuration")
    ap.add_argument("--output", default=".", help="output directory (default: cwd)")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        workers = _workers(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    columns, rows, manifest, ok = compute(cfg, workers)
    try:
        paths = write_outputs(Path(args.output), cfg, columns, rows, manifest)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in paths:
        print(p)
    if not ok:
        print("warning: some points did not converge; see the converged column",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
