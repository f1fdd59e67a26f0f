"""Tabular output (CSV with 12 significant digits, or JSON) for runs and sweeps."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError

FORMATS = ("csv", "json")


def fmt(x) -> str:
    """Number to text with 12 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _json_value(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    v = float(fmt(x))
    return v if math.isfinite(v) else str(v)


def molecule_labels(params) -> list[str]:
    return [f"{m.chirality.value}{m.index}" for m in params.molecules()]


def _population_columns(params):
    return [f"{lbl}_P{i}" for lbl in molecule_labels(params) for i in (1, 2, 3)]


def exact_table(series):
    """Columns ``t, photon_mean, photon_sq_mean, photon_var``, then populations per molecule."""
    header = ["t", "photon_mean", "photon_sq_mean", "photon_var"] + _population_columns(series.params)
    pops = series.populations.reshape(len(series.times), -1)
    rows = np.column_stack([series.times, series.photon_mean, series.photon_sq_mean,
                            series.photon_var, pops])
    return header, rows.tolist()


def gdtwa_table(moments, phys, params):
    """The exact-solver schema followed by raw Wigner moments and standard errors."""
    header = (["t", "photon_mean", "photon_sq_mean", "photon_var"] + _population_columns(params)
              + ["m_abs2", "m_abs4", "photon_mean_stderr", "photon_var_stderr", "clipped"])
    pops = phys.populations.reshape(len(phys.times), -1)
    sq = moments.m_abs4 - moments.m_abs2
    rows = np.column_stack([phys.times, phys.photon_mean, sq, phys.photon_var, pops,
                            moments.m_abs2, moments.m_abs4, phys.photon_mean_stderr,
                            phys.photon_var_stderr, phys.clipped.astype(float)])
    return header, rows.tolist()


def sweep_table(result):
    """Columns ``P, N_L, N_R, photon_ss, photon_var_ss, dP`` plus errors and flags."""
    header = ["P", "N_L", "N_R", "photon_ss", "photon_var_ss", "dP",
              "photon_ss_stderr", "photon_var_ss_stderr", "coherent_ss", "converged"]
    n = len(result.photon_ss)
    dP = result.uncertainty if result.uncertainty is not None else np.full(n, np.nan)
    rows = []
    for j in range(n):
        rows.append([
            float(result.excess_grid[j]), int(result.n_left[j]), int(result.n_right[j]),
            float(result.photon_ss[j]), float(result.photon_var_ss[j]), float(dP[j]),
            float(result.photon_ss_stderr[j]), float(result.photon_var_ss_stderr[j]),
            float(result.coherent_ss[j]), bool(result.converged[j]),
        ])
    return header, rows


def write_table(path, header, rows, fmt_name="csv", meta=None) -> Path:
    """Write ``rows`` under ``header``; JSON output also carries ``meta``."""
    if fmt_name not in FORMATS:
        raise ConfigError(f"unknown output format {fmt_name!r}; choose csv or json")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt_name == "csv":
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) for x in row])
    else:
        doc = {"columns": list(header), "rows": [[_json_value(x) for x in row] for row in rows]}
        if meta:
            doc["meta"] = meta
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_table(path):
    """Read a file written by :func:`write_table` into ``(header, float array)``."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        return doc["columns"], np.array(doc["rows"], dtype=float)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_default) + "\n", encoding="utf-8")
    return path


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
