r"""Physical observables from phase-space moments, and steady-state detection.

Trajectory averages of the classical cavity amplitude are symmetrically
(Weyl) ordered.  With :math:`m_2 = \overline{|\alpha|^2}` and
:math:`m_4 = \overline{|\alpha|^4}`:

.. math::

    \langle a^\dagger a\rangle = m_2 - 1/2, \qquad
    \langle (a^\dagger a)^2\rangle = m_4 - m_2 .

Both identities follow from :math:`\{a^{\dagger 2} a^2\}_s`-reordering and are
checked in the test-suite against operator averages of the exact solver on
Fock, coherent and interacting states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ComputeError, JensenViolation, NotConverged

SQRT3 = math.sqrt(3.0)
MAX_CLIPPED_FRACTION = 0.01
NOISE_SIGMAS = 6.0


def photon_mean_from_wigner(m_abs2):
    return np.asarray(m_abs2) - 0.5 if np.ndim(m_abs2) else float(m_abs2) - 0.5


def photon_var_from_wigner(m_abs2, m_abs4, rtol=1e-9):
    """Photon-number variance from the second and fourth Wigner moments of alpha."""
    m2 = np.asarray(m_abs2, dtype=float)
    m4 = np.asarray(m_abs4, dtype=float)
    slack = rtol * np.maximum(1.0, m2 ** 2)
    if np.any(m4 < m2 ** 2 - slack):
        raise JensenViolation("fourth moment below squared second moment")
    out = (m4 - m2) - (m2 - 0.5) ** 2
    return float(out) if out.ndim == 0 else out


def photon_var_stderr(n, m1, m2, m3, m4):
    """Delta-method standard error of the variance estimator.

    ``m_k`` are sample means of ``|alpha|^(2k)``; ``n`` is the trajectory count.
    """
    n = np.asarray(n, dtype=float)
    b = 2.0 * m1
    # influence function is X^2 - b X + const with X = |alpha|^2
    var_if = (m4 - m2 ** 2) - 2.0 * b * (m3 - m1 * m2) + b ** 2 * (m2 - m1 ** 2)
    return np.sqrt(np.clip(var_if, 0.0, None) / np.maximum(n, 1.0))


def populations_from_lambdas(lambda_means):
    """Level populations from the engine-ordered 8-vector (last axis).

    ``P1 = 1/3 + (D1 + D2/sqrt3)/2``, ``P2 = 1/3 + (-D1 + D2/sqrt3)/2``,
    ``P3 = 1/3 - D2/sqrt3``.
    """
    lam = np.asarray(lambda_means, dtype=float)
    d1 = lam[..., 6]
    d2 = lam[..., 7] / SQRT3
    return np.stack(
        [1.0 / 3.0 + 0.5 * (d1 + d2), 1.0 / 3.0 + 0.5 * (-d1 + d2), 1.0 / 3.0 - d2],
        axis=-1,
    )


@dataclass
class PhysicalSeries:
    """Photon statistics and level populations on a common time grid.

    ``populations`` has shape ``(n_times, n_molecules, 3)``.  Stochastic runs
    also carry ``photon_mean_stderr`` / ``photon_var_stderr``; exact runs leave
    them at zero.  ``block_photon_mean``/``block_weights`` (n_blocks, n_times)
    are per-block photon means and trajectory counts, used for batch-means
    errors of window averages.  ``amplitude`` is the field expectation
    ``<a>``, whose squared modulus is the coherent part of the photon number.
    """

    times: np.ndarray
    photon_mean: np.ndarray
    photon_var: np.ndarray
    populations: np.ndarray
    photon_mean_stderr: np.ndarray | None = None
    photon_var_stderr: np.ndarray | None = None
    clipped: np.ndarray | None = None
    significant_clip: np.ndarray | None = None
    n_effective: int | None = None
    block_photon_mean: np.ndarray | None = None
    block_weights: np.ndarray | None = None
    amplitude: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        if self.photon_mean_stderr is None:
            self.photon_mean_stderr = np.zeros(n)
        if self.photon_var_stderr is None:
            self.photon_var_stderr = np.zeros(n)
        if self.clipped is None:
            self.clipped = np.zeros(n, dtype=bool)
        if self.significant_clip is None:
            self.significant_clip = np.zeros(n, dtype=bool)

    @property
    def clip_count(self) -> int:
        return int(np.count_nonzero(self.clipped))


def from_wigner(moments) -> PhysicalSeries:
    """Convert a :class:`~enantiocav.gdtwa.WignerMomentSeries` into physical units.

    Statistically negative variances are clipped to zero and flagged.
    """
    n = moments.n_effective
    mean = photon_mean_from_wigner(moments.m_abs2)
    raw_var = (moments.m_abs4 - moments.m_abs2) - (moments.m_abs2 - 0.5) ** 2
    clipped = raw_var < 0
    var = np.where(clipped, 0.0, raw_var)
    mean_err = np.sqrt(np.clip(moments.m_abs4 - moments.m_abs2 ** 2, 0.0, None) / max(n, 1))
    var_err = photon_var_stderr(n, moments.m_abs2, moments.m_abs4, moments.m_abs6, moments.m_abs8)
    block_mean = block_w = None
    if getattr(moments, "block_abs2", None) is not None:
        block_w = np.asarray(moments.block_counts, dtype=float)
        block_mean = np.asarray(moments.block_abs2) / np.maximum(block_w, 1.0) - 0.5
    return PhysicalSeries(
        times=moments.times,
        photon_mean=mean,
        photon_var=var,
        populations=populations_from_lambdas(moments.lambda_means),
        photon_mean_stderr=mean_err,
        photon_var_stderr=var_err,
        clipped=clipped,
        significant_clip=raw_var < -5.0 * var_err,
        n_effective=n,
        block_photon_mean=block_mean,
        block_weights=block_w,
        amplitude=np.asarray(moments.m_alpha),
    )


def window_mean_stderr(series: PhysicalSeries, sel) -> float | None:
    """Batch-means standard error of the photon mean averaged over ``sel``.

    Each trajectory block gives one window average; their weighted spread
    accounts for time correlations inside the window.  ``None`` without at
    least two blocks.
    """
    if series.block_photon_mean is None or series.block_photon_mean.shape[0] < 2:
        return None
    w = series.block_weights[:, sel]
    x = np.sum(series.block_photon_mean[:, sel] * w, axis=1) / np.maximum(w.sum(axis=1), 1.0)
    wb = w.sum(axis=1)
    total = wb.sum()
    xbar = np.sum(wb * x) / total
    nb = len(x)
    var = np.sum(wb * (x - xbar) ** 2) / total * nb / (nb - 1)
    return float(np.sqrt(var * np.sum(wb ** 2) / total ** 2))


@dataclass
class SteadyReport:
    photon_mean: float
    photon_var: float
    populations: np.ndarray
    converged: bool
    drift: float
    threshold: float
    window: float
    photon_mean_stderr: float = 0.0
    photon_var_stderr: float = 0.0
    n_points: int = 0
    clipped: int = 0
    extras: dict = field(default_factory=dict)


def detect_steady_state(
    series: PhysicalSeries,
    tol: float = 1e-3,
    window: float = 0.4,
    noise_sigmas: float = NOISE_SIGMAS,
    strict: bool = True,
) -> SteadyReport:
    """Trailing-window flatness test.

    The photon number counts as stationary when its range over the last
    ``window`` time units is below ``max(tol * max(mean, 1e-6),
    noise_sigmas * stderr)``; the second term only matters for sampled series.
    Returns window averages; the reported photon-mean error is the
    batch-means error when block data is present, else the mean pointwise
    error.  With ``strict`` a failed test raises
    :class:`NotConverged`, otherwise the report has ``converged=False``.
    """
    t = np.asarray(series.times)
    if len(t) < 2 or t[-1] - t[0] < 2 * window - 1e-12:
        raise ValueError(f"series spans {t[-1] - t[0]:g}, needs at least {2 * window:g}")
    sel = t >= t[-1] - window - 1e-12
    mean = np.asarray(series.photon_mean)[sel]
    ss = float(np.mean(mean))
    drift = float(mean.max() - mean.min())
    stderr = float(np.mean(np.asarray(series.photon_mean_stderr)[sel]))
    threshold = max(tol * max(ss, 1e-6), noise_sigmas * stderr)
    batch = window_mean_stderr(series, sel)
    clipped_mask = np.asarray(series.clipped)[sel]
    clipped = int(np.count_nonzero(clipped_mask))
    # a clip only signals trouble when the raw variance was negative beyond sampling error
    significant = int(np.count_nonzero(clipped_mask & np.asarray(series.significant_clip)[sel]))
    report = SteadyReport(
        photon_mean=ss,
        photon_var=float(np.mean(np.asarray(series.photon_var)[sel])),
        populations=np.mean(np.asarray(series.populations)[sel], axis=0),
        converged=drift < threshold,
        drift=drift,
        threshold=threshold,
        window=window,
        photon_mean_stderr=stderr if batch is None else batch,
        photon_var_stderr=float(np.mean(np.asarray(series.photon_var_stderr)[sel])),
        n_points=int(sel.sum()),
        clipped=clipped,
    )
    report.extras["significant_clips"] = significant
    if series.amplitude is not None:
        report.extras["coherent"] = float(np.mean(np.abs(np.asarray(series.amplitude)[sel]) ** 2))
    if significant > MAX_CLIPPED_FRACTION * report.n_points:
        raise ComputeError(
            f"{significant} of {report.n_points} steady-window variances were significantly negative"
        )
    if strict and not report.converged:
        raise NotConverged(drift, threshold, window)
    return report
