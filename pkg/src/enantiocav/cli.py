"""Command-line front end.

Subcommands ``exact``, ``gdtwa``, ``sweep-excess``, ``sweep-nmol`` and
``validate`` read a JSON config, apply flag overrides, run, and write a data
file plus ``<out>.manifest.json`` holding the effective config, seed,
library versions and wall time.  A manifest can itself be passed back as
``--config`` to reproduce a run.

Exit codes: 0 success, 1 compute error, 2 config error, 3 validation failed.
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analysis, exact, gdtwa, io
from .errors import ConfigError, EnantiocavError, MissingKey, TooManyMolecules, UnknownKey
from .observables import PhysicalSeries, detect_steady_state, from_wigner
from .params import SystemParams

COMMANDS = ("exact", "gdtwa", "sweep-excess", "sweep-nmol", "validate")
EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2, 3
MANIFEST_VERSION = 1

TOP_KEYS = {"command", "params", "exact", "gdtwa", "steady", "sweep", "validate",
            "seed", "out", "format", "threads"}
EXACT_KEYS = {"t_final", "dt", "sample_every", "fock_cutoff"}
STEADY_KEYS = {"tol", "window", "strict"}
SWEEP_KEYS = {"engine", "n_total", "grid", "n_left"}
VALIDATE_KEYS = {"sigmas", "abs_tol"}
GDTWA_KEYS = {f.name for f in dataclasses.fields(gdtwa.EnsembleConfig)}

EXACT_DEFAULTS = {"t_final": 10.0, "dt": None, "sample_every": 50, "fock_cutoff": None}
VALIDATE_DEFAULTS = {"sigmas": 5.0, "abs_tol": 0.02}


# -- config --------------------------------------------------------------------

def load_config(path) -> dict:
    """Read a config file; manifests are accepted and yield their echoed config."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "manifest_version" in doc and "config" in doc:
        doc = doc["config"]
    return doc


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"section {where!r} must be an object")
    unknown = set(section) - allowed
    if unknown:
        exc = UnknownKey({f"{where}.{k}" if where else k for k in unknown})
        raise exc


def merge_flags(cfg: dict, args) -> dict:
    """Apply command-line overrides to a config mapping (returns a copy)."""
    cfg = copy.deepcopy(cfg)
    cfg["command"] = args.command
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trajectories is not None:
        cfg.setdefault("gdtwa", {})["n_trajectories"] = args.trajectories
    if args.threads is not None:
        cfg.setdefault("gdtwa", {})["workers"] = args.threads
    targets = {"exact": ["exact"], "validate": ["exact", "gdtwa"]}.get(args.command, ["gdtwa"])
    if args.command in ("sweep-excess", "sweep-nmol") and cfg.get("sweep", {}).get("engine") == "exact":
        targets = ["exact"]
    for flag, key in ((args.dt, "dt"), (args.t_final, "t_final")):
        if flag is not None:
            for t in targets:
                cfg.setdefault(t, {})[key] = flag
    if args.out is not None:
        cfg["out"] = args.out
    if args.format is not None:
        cfg["format"] = args.format
    return cfg


def _params(cfg) -> SystemParams:
    if "params" not in cfg:
        raise MissingKey({"params"})
    try:
        return SystemParams.from_dict(cfg["params"])
    except (TypeError, AttributeError) as exc:
        raise ConfigError(f"invalid parameter values: {exc}") from None


def _ensemble(cfg) -> gdtwa.EnsembleConfig:
    sec = dict(cfg.get("gdtwa", {}))
    _check_keys(sec, GDTWA_KEYS, "gdtwa")
    if "seed" in cfg:
        sec["master_seed"] = cfg["seed"]
    if "threads" in cfg and "workers" not in sec:
        sec["workers"] = cfg["threads"]
    try:
        return gdtwa.EnsembleConfig(**sec)
    except TypeError as exc:
        raise ConfigError(f"invalid gdtwa settings: {exc}") from None


def _exact_settings(cfg) -> dict:
    sec = dict(cfg.get("exact", {}))
    _check_keys(sec, EXACT_KEYS, "exact")
    if cfg.get("command") in ("sweep-excess", "sweep-nmol"):
        return {**dataclasses.asdict(analysis.ExactSettings()), **sec}
    return {**EXACT_DEFAULTS, **sec}


def _steady(cfg) -> analysis.SteadySettings:
    sec = dict(cfg.get("steady", {}))
    _check_keys(sec, STEADY_KEYS, "steady")
    return analysis.SteadySettings(**sec)


def validate_config(cfg: dict) -> dict:
    """Check the whole config before any compute; returns the built objects."""
    _check_keys(cfg, TOP_KEYS, "")
    command = cfg.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    fmt_name = cfg.get("format", "csv")
    if fmt_name not in io.FORMATS:
        raise ConfigError(f"unknown output format {fmt_name!r}; choose csv or json")
    p = _params(cfg)
    built = {"params": p, "ensemble": _ensemble(cfg), "exact": _exact_settings(cfg),
             "steady": _steady(cfg), "format": fmt_name}
    if command in ("exact", "validate") and p.n_molecules > exact.MAX_MOLECULES:
        raise TooManyMolecules(
            f"the exact solver handles at most {exact.MAX_MOLECULES} molecules, got {p.n_molecules}; "
            "use the gdtwa command"
        )
    if command in ("sweep-excess", "sweep-nmol"):
        sweep = dict(cfg.get("sweep", {}))
        _check_keys(sweep, SWEEP_KEYS, "sweep")
        engine = analysis.Engine(sweep.get("engine", "gdtwa"))
        built["engine"] = engine
        if command == "sweep-excess":
            if "n_total" not in sweep:
                raise MissingKey({"sweep.n_total"})
            n_total = int(sweep["n_total"])
            grid = sweep.get("grid", {})
            if isinstance(grid, dict):
                _check_keys(grid, {"lo", "hi", "stride"}, "sweep.grid")
                grid = analysis.realizable_grid(n_total, **grid)
            grid = np.asarray(grid, dtype=float)
            for P in grid:
                analysis.excess_to_counts(float(P), n_total)
            if engine is analysis.Engine.EXACT and n_total > exact.MAX_MOLECULES:
                raise TooManyMolecules(f"exact sweeps handle at most {exact.MAX_MOLECULES} molecules")
            built["n_total"], built["grid"] = n_total, grid
        else:
            values = sweep.get("n_left")
            if values is None:
                raise MissingKey({"sweep.n_left"})
            if isinstance(values, dict):
                _check_keys(values, {"start", "stop", "step"}, "sweep.n_left")
                values = list(range(values.get("start", 0), values["stop"] + 1, values.get("step", 1)))
            if engine is analysis.Engine.EXACT and max(values) > exact.MAX_MOLECULES:
                raise TooManyMolecules(f"exact sweeps handle at most {exact.MAX_MOLECULES} molecules")
            built["n_left"] = [int(v) for v in values]
    if command == "validate":
        sec = dict(cfg.get("validate", {}))
        _check_keys(sec, VALIDATE_KEYS, "validate")
        built["validate"] = {**VALIDATE_DEFAULTS, **sec}
    return built


# -- commands ------------------------------------------------------------------

def run_exact(cfg, built, out):
    p = built["params"]
    series = exact.evolve(p, **built["exact"])
    header, rows = io.exact_table(series)
    io.write_table(out, header, rows, built["format"])
    phys = PhysicalSeries(series.times, series.photon_mean, series.photon_var, series.populations,
                          amplitude=series.amplitude)
    summary = {"diagnostics": series.diagnostics, "fock_cutoff": series.layout.fock_cutoff}
    summary["steady"] = _steady_summary(phys, built["steady"], p)
    return summary, EXIT_OK


def _steady_summary(phys, steady, p):
    window = steady.resolved_window(p)
    if phys.times[-1] - phys.times[0] < 2 * window:
        return None
    rep = detect_steady_state(phys, tol=steady.tol, window=window, strict=False)
    return {"photon_mean": rep.photon_mean, "photon_var": rep.photon_var,
            "photon_mean_stderr": rep.photon_mean_stderr, "converged": rep.converged,
            "drift": rep.drift, "threshold": rep.threshold, "window": rep.window,
            "populations": rep.populations}


def run_gdtwa(cfg, built, out):
    p = built["params"]
    moments = gdtwa.run_ensemble(p, built["ensemble"])
    phys = from_wigner(moments)
    header, rows = io.gdtwa_table(moments, phys, p)
    io.write_table(out, header, rows, built["format"])
    summary = {"n_effective": moments.n_effective, "blowups": moments.blowups, **moments.meta,
               "clipped": phys.clip_count}
    summary["steady"] = _steady_summary(phys, built["steady"], p)
    return summary, EXIT_OK


def _engine_cfg(built):
    if built["engine"] is analysis.Engine.EXACT:
        return analysis.ExactSettings(**built["exact"])
    return built["ensemble"]


def _sweep_summary(res, x=None):
    z = analysis.find_zero_crossing(res, x=x)
    summary = {"zero_crossing": None if z is None else dataclasses.asdict(z),
               "all_converged": bool(np.all(res.converged)), "seeds": res.seeds}
    if len(res) >= 3 and res.n_total is not None:
        u = analysis.uncertainty_curve(res)
        summary["min_uncertainty"] = {"dP": u.minimum, "P": u.at}
    return summary


def run_sweep_excess(cfg, built, out):
    res = analysis.sweep_excess(built["params"], built["n_total"], built["grid"],
                                engine=built["engine"], cfg=_engine_cfg(built), steady=built["steady"])
    header, rows = io.sweep_table(res)
    io.write_table(out, header, rows, built["format"])
    return _sweep_summary(res), EXIT_OK


def run_sweep_nmol(cfg, built, out):
    res = analysis.sweep_molecule_number(built["params"], built["n_left"], engine=built["engine"],
                                         cfg=_engine_cfg(built), steady=built["steady"])
    header, rows = io.sweep_table(res)
    io.write_table(out, header, rows, built["format"])
    return _sweep_summary(res, x=res.n_left), EXIT_OK


def compare_series(t_ref, n_ref, t, n, stderr, sigmas=5.0, abs_tol=0.02):
    """Pointwise comparison of a sampled photon series against a reference.

    The reference is linearly interpolated onto ``t``; each point may deviate
    by ``max(sigmas * stderr, abs_tol)``.
    """
    ref = np.interp(t, t_ref, n_ref)
    dev = np.abs(np.asarray(n) - ref)
    allowed = np.maximum(sigmas * np.asarray(stderr), abs_tol)
    worst = int(np.argmax(dev / allowed))
    report = {
        "max_abs_deviation": float(dev.max()),
        "mean_abs_deviation": float(dev.mean()),
        "worst_time": float(t[worst]),
        "worst_ratio": float(dev[worst] / allowed[worst]),
        "n_points": int(len(t)),
        "verdict": "pass" if bool(np.all(dev <= allowed)) else "fail",
    }
    return report, ref, dev, allowed


def run_validate(cfg, built, out):
    p = built["params"]
    ens = built["ensemble"]
    ex = dict(built["exact"])
    ex["t_final"] = ens.t_final
    series = exact.evolve(p, **ex)
    moments = gdtwa.run_ensemble(p, ens)
    phys = from_wigner(moments)
    v = built["validate"]
    report, ref, dev, allowed = compare_series(series.times, series.photon_mean, phys.times,
                                               phys.photon_mean, phys.photon_mean_stderr,
                                               v["sigmas"], v["abs_tol"])
    header = ["t", "photon_mean_exact", "photon_mean_gdtwa", "photon_mean_stderr", "abs_deviation", "allowed"]
    rows = np.column_stack([phys.times, ref, phys.photon_mean, phys.photon_mean_stderr, dev, allowed])
    io.write_table(out, header, rows.tolist(), built["format"])
    report["criterion"] = f"|gdtwa - exact| <= max({v['sigmas']:g} * stderr, {v['abs_tol']:g})"
    report["exact_diagnostics"] = series.diagnostics
    print(json.dumps({"verdict": report["verdict"], "max_abs_deviation": report["max_abs_deviation"]}))
    return {"report": report}, (EXIT_OK if report["verdict"] == "pass" else EXIT_VALIDATION)


RUNNERS = {
    "exact": run_exact,
    "gdtwa": run_gdtwa,
    "sweep-excess": run_sweep_excess,
    "sweep-nmol": run_sweep_nmol,
    "validate": run_validate,
}


# -- entry point ---------------------------------------------------------------

def _versions():
    out = {"python": platform.python_version()}
    for name in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="enantiocav", description="Chiral-molecule cavity simulator")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file (or a manifest from an earlier run)")
    ap.add_argument("--seed", type=int, help="master seed of the stochastic engine")
    ap.add_argument("--trajectories", type=int, help="number of stochastic trajectories")
    ap.add_argument("--dt", type=float, help="integration step [1/g]")
    ap.add_argument("--t-final", type=float, dest="t_final", help="final time [1/g]")
    ap.add_argument("--out", help="output data file; the manifest is written next to it")
    ap.add_argument("--format", choices=io.FORMATS, help="output format (default csv)")
    ap.add_argument("--threads", type=int, help="worker threads for the stochastic engine")
    return ap


def _fail(exc, code):
    info = exc.to_dict() if isinstance(exc, EnantiocavError) else {
        "error": type(exc).__name__, "message": str(exc)}
    info["exit_code"] = code
    print(json.dumps(info, default=io._default), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        cfg = merge_flags(cfg, args)
        built = validate_config(cfg)
    except (ConfigError, ValueError) as exc:
        return _fail(exc, EXIT_CONFIG)

    out = Path(cfg.get("out") or f"enantiocav_{args.command.replace('-', '_')}.{built['format']}")
    start = time.perf_counter()
    try:
        summary, code = RUNNERS[args.command](cfg, built, out)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except Exception as exc:  # every other failure is a compute failure
        return _fail(exc, EXIT_COMPUTE)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": args.command,
        "config": cfg,
        "seed": built["ensemble"].master_seed,
        "output": str(out),
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - start,
        "result": summary,
    }
    io.write_json(manifest_path(out), manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
