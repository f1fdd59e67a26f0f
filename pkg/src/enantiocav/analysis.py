"""Enantiomeric-excess sweeps, detection uncertainty and photon-number zeros.

The excess of a mixture of ``n_total`` molecules is
``P = (N_R - N_L) / (N_R + N_L)``; only ``P = 2 k / n_total - 1`` is
realizable.  A sweep runs one solver per grid point to steady state and
records the trailing-window photon mean and variance.  The uncertainty of
an excess estimate from a photon-number measurement follows from error
propagation, ``dP = sqrt(var) / |d<n>/dP|``, with the slope taken by finite
differences on the grid.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import exact, gdtwa
from .errors import ConfigError, EnantiocavError, NonRealizable, TooManyMolecules
from .observables import PhysicalSeries, SteadyReport, detect_steady_state, from_wigner
from .params import SystemParams, validate_params

REALIZABLE_TOL = 1e-9
ZERO_SLOPE = 1e-12
ZERO_FLOOR_SIGMAS = 3.0


class Engine(str, enum.Enum):
    GDTWA = "gdtwa"
    EXACT = "exact"


@dataclass(frozen=True)
class ExactSettings:
    """Integration settings for master-equation sweep points.

    The default horizon is long: a single molecule at the reference rates
    relaxes with a slow mode of rate about 0.06 g.
    """

    t_final: float = 80.0
    dt: float | None = None
    sample_every: int = 20
    fock_cutoff: int | None = None


@dataclass(frozen=True)
class SteadySettings:
    """Trailing-window flatness test; ``window=None`` means ``2/kappa``.

    With ``strict=False`` a point that fails the test is kept and flagged in
    :attr:`SweepResult.converged` instead of aborting the sweep.
    """

    tol: float = 1e-3
    window: float | None = None
    strict: bool = False

    def resolved_window(self, p: SystemParams) -> float:
        return self.window if self.window is not None else exact.default_window(p)


@dataclass
class SweepResult:
    """Steady photon statistics on a grid of compositions.

    ``coherent_ss`` is the steady ``|<a>|^2``; the rest of ``photon_ss`` is
    incoherent.  ``uncertainty`` is filled for excess sweeps with at least three points.
    For molecule-number sweeps ``n_total`` is ``None`` and ``excess_grid``
    holds the implied excess of each point.
    """

    excess_grid: np.ndarray
    n_left: np.ndarray
    n_right: np.ndarray
    photon_ss: np.ndarray
    photon_var_ss: np.ndarray
    photon_ss_stderr: np.ndarray
    photon_var_ss_stderr: np.ndarray
    converged: np.ndarray
    coherent_ss: np.ndarray
    n_total: int | None
    eta: float
    engine: Engine
    uncertainty: np.ndarray | None = None
    seeds: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def __len__(self):
        return len(self.photon_ss)


def excess_to_counts(P: float, n_total: int) -> tuple[int, int]:
    """``(N_L, N_R)`` for excess ``P`` at ``n_total`` molecules."""
    if n_total < 1:
        raise NonRealizable(f"n_total must be >= 1, got {n_total}")
    if not -1.0 - REALIZABLE_TOL <= P <= 1.0 + REALIZABLE_TOL:
        raise NonRealizable(f"excess {P} outside [-1, 1]")
    x = n_total * (1.0 + P) / 2.0
    n_right = int(round(x))
    if abs(x - n_right) > REALIZABLE_TOL:
        raise NonRealizable(f"excess {P} is not realizable with {n_total} molecules")
    return n_total - n_right, n_right


def counts_to_excess(n_left: int, n_right: int) -> float:
    return (n_right - n_left) / (n_left + n_right)


def realizable_grid(n_total: int, lo: float = -0.9, hi: float = 0.9, stride: int = 1,
                    include_zero: bool = True) -> np.ndarray:
    """Realizable excess values in ``[lo, hi]``, taking every ``stride``-th.

    With ``include_zero`` (and ``n_total`` even) the grid is anchored so that
    ``P = 0`` is on it.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    ks = np.arange(n_total + 1)
    P = 2.0 * ks / n_total - 1.0
    keep = (P >= lo - REALIZABLE_TOL) & (P <= hi + REALIZABLE_TOL)
    ks = ks[keep]
    anchor = n_total // 2 if include_zero and n_total % 2 == 0 else (ks[0] if len(ks) else 0)
    ks = ks[(ks - anchor) % stride == 0]
    return 2.0 * ks / n_total - 1.0


def point_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit seed of sweep point ``index``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(0x5EE9, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _exact_steady(p: SystemParams, settings: ExactSettings, steady: SteadySettings) -> SteadyReport:
    if p.n_molecules > exact.MAX_MOLECULES:
        raise TooManyMolecules(
            f"the exact solver handles at most {exact.MAX_MOLECULES} molecules; use the gdtwa engine"
        )
    series = exact.evolve(p, t_final=settings.t_final, dt=settings.dt,
                          sample_every=settings.sample_every, fock_cutoff=settings.fock_cutoff)
    phys = PhysicalSeries(series.times, series.photon_mean, series.photon_var, series.populations,
                          amplitude=series.amplitude)
    rep = detect_steady_state(phys, tol=steady.tol, window=steady.resolved_window(p), strict=steady.strict)
    rep.extras["diagnostics"] = dict(series.diagnostics)
    return rep


def _gdtwa_steady(p: SystemParams, cfg: gdtwa.EnsembleConfig, steady: SteadySettings) -> SteadyReport:
    phys = from_wigner(gdtwa.run_ensemble(p, cfg))
    return detect_steady_state(phys, tol=steady.tol, window=steady.resolved_window(p), strict=steady.strict)


def _run_points(template: SystemParams, counts, engine, cfg, steady):
    engine = Engine(engine)
    if cfg is None:
        cfg = gdtwa.EnsembleConfig(t_final=20.0) if engine is Engine.GDTWA else ExactSettings()
    if engine is Engine.GDTWA and not isinstance(cfg, gdtwa.EnsembleConfig):
        raise ConfigError("the gdtwa engine needs an EnsembleConfig")
    if engine is Engine.EXACT and not isinstance(cfg, ExactSettings):
        raise ConfigError("the exact engine needs ExactSettings")
    steady = steady or SteadySettings()
    if engine is Engine.EXACT:
        too_big = [nl + nr for nl, nr in counts if nl + nr > exact.MAX_MOLECULES]
        if too_big:
            raise TooManyMolecules(
                f"the exact solver handles at most {exact.MAX_MOLECULES} molecules, "
                f"sweep asks for {max(too_big)}; use the gdtwa engine"
            )

    reports, seeds = [], []
    for j, (nl, nr) in enumerate(counts):
        p = validate_params(template.replace(n_left=nl, n_right=nr))
        try:
            if engine is Engine.GDTWA:
                seed = point_seed(cfg.master_seed, j)
                rep = _gdtwa_steady(p, replace(cfg, master_seed=seed), steady)
            else:
                seed = None
                rep = _exact_steady(p, cfg, steady)
        except EnantiocavError as exc:
            where = {"grid_index": j, "n_left": nl, "n_right": nr}
            if nl + nr:
                where["excess"] = counts_to_excess(nl, nr)
            exc.details = {**(getattr(exc, "details", None) or {}), **where}
            exc.args = (f"{exc} [grid point {j}: N_L={nl}, N_R={nr}]",)
            raise
        reports.append(rep)
        seeds.append(seed)
    return reports, seeds


def _collect(reports, seeds, counts, n_total, template, engine):
    nl = np.array([c[0] for c in counts], dtype=int)
    nr = np.array([c[1] for c in counts], dtype=int)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(nl + nr > 0, (nr - nl) / np.maximum(nl + nr, 1), 0.0)
    return SweepResult(
        excess_grid=P,
        n_left=nl,
        n_right=nr,
        photon_ss=np.array([r.photon_mean for r in reports]),
        photon_var_ss=np.array([r.photon_var for r in reports]),
        photon_ss_stderr=np.array([r.photon_mean_stderr for r in reports]),
        photon_var_ss_stderr=np.array([r.photon_var_stderr for r in reports]),
        converged=np.array([r.converged for r in reports], dtype=bool),
        coherent_ss=np.array([r.extras.get("coherent", np.nan) for r in reports]),
        n_total=n_total,
        eta=template.eta,
        engine=Engine(engine),
        seeds=seeds,
        reports=reports,
    )


def sweep_excess(template: SystemParams, n_total: int, grid, engine=Engine.GDTWA, cfg=None,
                 steady: SteadySettings | None = None) -> SweepResult:
    """Steady photon statistics at each excess in ``grid``.

    ``cfg`` is an :class:`~enantiocav.gdtwa.EnsembleConfig` for the stochastic
    engine (grid point ``j`` runs with seed ``point_seed(cfg.master_seed, j)``)
    or :class:`ExactSettings` for the master equation.  Solver errors are
    re-raised with the failing grid point in their message and details.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ConfigError("grid must be a non-empty list of excess values")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be strictly increasing")
    counts = [excess_to_counts(float(P), n_total) for P in grid]
    reports, seeds = _run_points(template, counts, engine, cfg, steady)
    res = _collect(reports, seeds, counts, n_total, template, engine)
    res.excess_grid = grid.copy()
    if len(grid) >= 3:
        res.uncertainty = uncertainty_curve(res).values
    return res


def sweep_molecule_number(template: SystemParams, n_left_values, engine=Engine.GDTWA, cfg=None,
                          steady: SteadySettings | None = None) -> SweepResult:
    """Steady photon statistics versus the number of left-handed molecules (``N_R = 0``)."""
    if template.n_right != 0:
        raise ConfigError("molecule-number sweeps need n_right = 0 in the template")
    values = [int(v) for v in n_left_values]
    if any(v < 0 for v in values) or any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("N_L values must be non-negative and strictly increasing")
    counts = [(v, 0) for v in values]
    reports, seeds = _run_points(template, counts, engine, cfg, steady)
    return _collect(reports, seeds, counts, None, template, engine)


@dataclass(frozen=True)
class UncertaintyCurve:
    values: np.ndarray
    slopes: np.ndarray
    argmin: int
    minimum: float
    at: float


def uncertainty_curve(s: SweepResult, x=None) -> UncertaintyCurve:
    """``dP_j = sqrt(var_j) / |slope_j|`` on the sweep grid.

    Slopes are central differences (one-sided at the ends).  Points with
    ``|slope| < 1e-12`` get an infinite uncertainty.  ``x`` overrides the
    abscissa (defaults to the excess grid).
    """
    x = np.asarray(s.excess_grid if x is None else x, dtype=float)
    y = np.asarray(s.photon_ss, dtype=float)
    if len(x) < 3:
        raise ConfigError("the uncertainty curve needs at least 3 grid points")
    slopes = np.empty_like(y)
    slopes[1:-1] = (y[2:] - y[:-2]) / (x[2:] - x[:-2])
    slopes[0] = (y[1] - y[0]) / (x[1] - x[0])
    slopes[-1] = (y[-1] - y[-2]) / (x[-1] - x[-2])
    sd = np.sqrt(np.clip(np.asarray(s.photon_var_ss, dtype=float), 0.0, None))
    with np.errstate(divide="ignore"):
        vals = np.where(np.abs(slopes) < ZERO_SLOPE, np.inf, sd / np.abs(slopes))
    k = int(np.argmin(vals))
    return UncertaintyCurve(vals, slopes, k, float(vals[k]), float(x[k]))


@dataclass(frozen=True)
class ZeroCrossing:
    location: float
    value: float
    floor: float
    index: int


def parabola_vertex(x, y):
    """Vertex ``(x0, y0)`` of the parabola through three points, or ``None`` if not convex."""
    (x1, x2, x3), (y1, y2, y3) = x, y
    denom = (x1 - x2) * (x1 - x3) * (x2 - x3)
    a = (x3 * (y2 - y1) + x2 * (y1 - y3) + x1 * (y3 - y2)) / denom
    b = (x3 ** 2 * (y1 - y2) + x2 ** 2 * (y3 - y1) + x1 ** 2 * (y2 - y3)) / denom
    c = y1 - a * x1 ** 2 - b * x1
    if not a > 0:
        return None
    x0 = -b / (2 * a)
    return x0, c - b * b / (4 * a)


def find_zero_crossing(s: SweepResult, x=None, atol: float = 1e-6,
                       sigmas: float = ZERO_FLOOR_SIGMAS) -> ZeroCrossing | None:
    """Locate the photon-number zero of a sweep, if there is one.

    The grid minimum must be interior.  A parabola through it and its two
    neighbours gives the location and the interpolated minimum.  Where the
    field amplitude cancels, an incoherent remainder ``photon_ss - |<a>|^2``
    stays, so the zero is accepted when the interpolated minimum is below
    that remainder plus ``max(sigmas * stderr, atol)``, all taken at the grid
    minimum.  ``x`` overrides the abscissa (e.g. ``N_L`` for molecule-number
    sweeps).
    """
    if x is None:
        x = s.excess_grid if s.n_total is not None else s.n_left
    x = np.asarray(x, dtype=float)
    y = np.asarray(s.photon_ss, dtype=float)
    k = int(np.argmin(y))
    if k == 0 or k == len(y) - 1:
        return None
    incoherent = float(s.photon_ss[k] - s.coherent_ss[k])
    if not np.isfinite(incoherent):
        incoherent = 0.0
    floor = max(incoherent, 0.0) + max(sigmas * float(s.photon_ss_stderr[k]), atol)
    vertex = parabola_vertex(x[k - 1:k + 2], y[k - 1:k + 2])
    if vertex is None:
        return None
    x0, y0 = vertex
    if y0 >= floor:
        return None
    return ZeroCrossing(float(x0), float(max(y0, 0.0)), floor, k)


def bare_cavity_photons(p: SystemParams) -> float:
    """Analytic steady photon number without molecules, ``eta^2 / (Delta_c^2 + kappa^2/4)``."""
    return p.eta ** 2 / (p.delta_c ** 2 + p.kappa ** 2 / 4.0)


__all__ = [
    "Engine", "ExactSettings", "SteadySettings", "SweepResult", "UncertaintyCurve", "ZeroCrossing",
    "excess_to_counts", "counts_to_excess", "realizable_grid", "point_seed", "sweep_excess",
    "sweep_molecule_number", "uncertainty_curve", "find_zero_crossing", "parabola_vertex",
    "bare_cavity_photons",
]
