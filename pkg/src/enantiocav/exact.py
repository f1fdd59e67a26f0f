"""Exact Lindblad evolution on the truncated Fock x (three-level)^N space.

Basis ordering: the cavity is the most significant factor, followed by the
molecules in layout order (left-handed block, then right-handed block).  A
product basis state ``|n; i_1, ..., i_N>`` with 1-based levels ``i_k`` sits at
index ``n * 3**N + sum_k (i_k - 1) * 3**(N - k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CutoffBreach, CutoffTooSmall, LengthMismatch, NonPhysical, TooManyMolecules
from .params import SystemParams, validate_params

MAX_MOLECULES = 4
TOP_POPULATION_LIMIT = 1e-4
TRACE_DRIFT_LIMIT = 1e-6
LEVELS = 3


@dataclass(frozen=True)
class HilbertLayout:
    fock_cutoff: int
    n_left: int
    n_right: int

    @property
    def n_molecules(self) -> int:
        return self.n_left + self.n_right

    @property
    def molecule_dims(self) -> list[int]:
        return [LEVELS] * self.n_molecules

    @property
    def molecular_dim(self) -> int:
        return LEVELS ** self.n_molecules

    @property
    def total_dim(self) -> int:
        return self.fock_cutoff * self.molecular_dim

    @property
    def shape(self) -> tuple:
        return (self.fock_cutoff,) + (LEVELS,) * self.n_molecules

    def index(self, n_photons: int, levels=()) -> int:
        """Flat index of ``|n_photons; levels...>`` (levels are 1-based)."""
        if len(levels) != self.n_molecules:
            raise LengthMismatch(f"expected {self.n_molecules} levels, got {len(levels)}")
        idx = n_photons
        for lvl in levels:
            idx = idx * LEVELS + (lvl - 1)
        return idx


def default_fock_cutoff(p: SystemParams) -> int:
    """Cutoff covering the bare driven-cavity amplitude with a wide margin."""
    denom = p.delta_c ** 2 + p.kappa ** 2 / 4.0
    n_bare = p.eta ** 2 / denom if denom > 0 else 0.0
    if p.eta != 0 and denom == 0:
        n_bare = p.eta ** 2
    return max(4, math.ceil(4.0 * (n_bare + 1.0)))


def make_layout(p: SystemParams, fock_cutoff: int | None = None) -> HilbertLayout:
    if p.n_molecules > MAX_MOLECULES:
        raise TooManyMolecules(
            f"exact solver supports at most {MAX_MOLECULES} molecules, got {p.n_molecules}; "
            "use the GDTWA engine for larger ensembles"
        )
    if fock_cutoff is None:
        fock_cutoff = default_fock_cutoff(p)
    if fock_cutoff < 1:
        raise CutoffTooSmall(f"fock_cutoff must be >= 1, got {fock_cutoff}")
    return HilbertLayout(int(fock_cutoff), p.n_left, p.n_right)


# -- operators -----------------------------------------------------------------

def _kron_all(factors):
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return sp.csr_matrix(out)


def annihilation(layout: HilbertLayout) -> sp.csr_matrix:
    a = sp.diags(np.sqrt(np.arange(1, layout.fock_cutoff)), 1, dtype=complex)
    return _kron_all([a, sp.identity(layout.molecular_dim, dtype=complex)])


def transition(layout: HilbertLayout, molecule: int, i: int, j: int) -> sp.csr_matrix:
    """``|i><j|`` on the 0-based ``molecule``, identity elsewhere (1-based levels)."""
    s = sp.csr_matrix(([1.0 + 0j], ([i - 1], [j - 1])), shape=(LEVELS, LEVELS))
    factors = [sp.identity(layout.fock_cutoff, dtype=complex)]
    for k in range(layout.n_molecules):
        factors.append(s if k == molecule else sp.identity(LEVELS, dtype=complex))
    return _kron_all(factors)


def build_hamiltonian(p: SystemParams, layout: HilbertLayout) -> sp.csr_matrix:
    """Rotating-frame Hamiltonian of the driven cavity with its molecules.

    ``Delta_c a'a + sum_n [Delta31 s33 + (Delta31 - Delta32) s22
    + (Omega31 s31 + Omega32 e^{i phi} s32 + g s21 a + h.c.)] + eta (a' + a)``.
    """
    if (layout.n_left, layout.n_right) != (p.n_left, p.n_right):
        raise LengthMismatch("layout molecule counts do not match parameters")
    if layout.fock_cutoff < 2 and (p.eta != 0 or (p.g != 0 and layout.n_molecules)):
        raise CutoffTooSmall("a driven or coupled cavity needs fock_cutoff >= 2")
    a = annihilation(layout)
    ad = a.conj().T
    H = p.delta_c * (ad @ a) + p.eta * (a + ad)
    for k, phi in enumerate(p.phases()):
        diag = p.delta31 * transition(layout, k, 3, 3) + (p.delta31 - p.delta32) * transition(layout, k, 2, 2)
        coupling = (
            p.omega31 * transition(layout, k, 3, 1)
            + p.omega32 * np.exp(1j * phi) * transition(layout, k, 3, 2)
            + p.g * (transition(layout, k, 2, 1) @ a)
        )
        H = H + diag + coupling + coupling.conj().T
    H = sp.csr_matrix(H)
    H.sum_duplicates()
    H.eliminate_zeros()
    return H


class MasterEquation:
    """Precomputed sparse operators for repeated right-hand-side evaluations.

    Uses ``drho/dt = K rho + (K rho)^dag + kappa a rho a^dag`` with the
    effective generator ``K = -iH - (kappa/2) a^dag a``; ``rho`` must be Hermitian.
    """

    def __init__(self, p: SystemParams, layout: HilbertLayout, H=None):
        self.params = p
        self.layout = layout
        self.H = build_hamiltonian(p, layout) if H is None else sp.csr_matrix(H)
        self.a = annihilation(layout)
        self.n = sp.csr_matrix(self.a.conj().T @ self.a)
        self.K = sp.csr_matrix(-1j * self.H - 0.5 * p.kappa * self.n)

    def rhs(self, rho: np.ndarray, hermitian: bool = True) -> np.ndarray:
        """Right-hand side; ``hermitian=False`` gives the general (slower) form."""
        m = self.K @ rho
        if hermitian:
            out = m + m.conj().T
        else:
            out = m + (self.K @ rho.conj().T).conj().T
        if self.params.kappa:
            x = self.a @ rho
            if hermitian:
                out += self.params.kappa * (self.a @ x.conj().T)
            else:
                out += self.params.kappa * (self.a @ x.conj().T).conj().T
        return out


def lindblad_rhs(p: SystemParams, H, rho, layout: HilbertLayout | None = None) -> np.ndarray:
    """``-i[H, rho] + (kappa/2)(2 a rho a' - a'a rho - rho a'a)``."""
    if layout is None:
        layout = HilbertLayout(H.shape[0] // LEVELS ** p.n_molecules, p.n_left, p.n_right)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (layout.total_dim, layout.total_dim) or H.shape != rho.shape:
        raise LengthMismatch(f"shapes {H.shape} and {rho.shape} do not match layout {layout}")
    return MasterEquation(p, layout, H).rhs(rho, hermitian=False)


# -- states and observables ----------------------------------------------------

@dataclass
class DensityMatrix:
    data: np.ndarray
    layout: HilbertLayout

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T)).min())


def initial_state(layout: HilbertLayout, level: int = 3, n_photons: int = 0) -> DensityMatrix:
    """Fock state ``|n_photons>`` with every molecule in ``|level>``."""
    idx = layout.index(n_photons, [level] * layout.n_molecules)
    rho = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    rho[idx, idx] = 1.0
    return DensityMatrix(rho, layout)


def product_state(layout: HilbertLayout, cavity: np.ndarray, molecules) -> DensityMatrix:
    """Tensor product of a cavity density matrix and per-molecule 3x3 density matrices."""
    rho = np.asarray(cavity, dtype=complex)
    for m in molecules:
        rho = np.kron(rho, np.asarray(m, dtype=complex))
    if rho.shape != (layout.total_dim, layout.total_dim):
        raise LengthMismatch(f"product has shape {rho.shape}, layout needs {layout.total_dim}")
    return DensityMatrix(rho, layout)


def coherent_density(fock_cutoff: int, alpha: complex) -> np.ndarray:
    n = np.arange(fock_cutoff)
    logfact = np.cumsum(np.log(np.maximum(n, 1)))
    with np.errstate(divide="ignore"):
        amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * np.power(complex(alpha), n)
    return np.outer(amp, amp.conj())


def photon_distribution(rho: np.ndarray, layout: HilbertLayout) -> np.ndarray:
    diag = np.real(np.diagonal(rho))
    return diag.reshape(layout.fock_cutoff, layout.molecular_dim).sum(axis=1)


def molecular_populations(rho: np.ndarray, layout: HilbertLayout) -> np.ndarray:
    """``P[k, i-1] = Tr(|i><i|_k rho)`` for every molecule ``k``."""
    diag = np.real(np.diagonal(rho)).reshape(layout.shape)
    out = np.empty((layout.n_molecules, LEVELS))
    axes = tuple(range(1 + layout.n_molecules))
    for k in range(layout.n_molecules):
        keep = 1 + k
        out[k] = diag.sum(axis=tuple(ax for ax in axes if ax != keep))
    return out


def reduced_molecule(rho: np.ndarray, layout: HilbertLayout, molecule: int) -> np.ndarray:
    """Reduced 3x3 density matrix of the 0-based ``molecule``."""
    t = rho.reshape(layout.shape * 2)
    nsub = 1 + layout.n_molecules
    keep = 1 + molecule
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:nsub])
    col = [row[k] if k != keep else letters[nsub + k] for k in range(nsub)]
    expr = "".join(row) + "".join(col) + "->" + row[keep] + col[keep]
    return np.einsum(expr, t)


@dataclass
class ObservableSeries:
    """Sampled observables of an exact run.

    ``populations`` has shape ``(n_times, n_molecules, 3)``; ``amplitude`` is
    the field expectation ``<a>``.  ``diagnostics``
    records the worst trace drift, Hermiticity error, top-Fock population and
    per-molecule population-sum error seen at any sampled time, and the smallest eigenvalue of the final state.
    """

    times: np.ndarray
    photon_mean: np.ndarray
    photon_sq_mean: np.ndarray
    populations: np.ndarray
    layout: HilbertLayout
    amplitude: np.ndarray | None = None
    params: SystemParams | None = None
    diagnostics: dict = field(default_factory=dict)
    final_state: DensityMatrix | None = None

    @property
    def photon_var(self) -> np.ndarray:
        return self.photon_sq_mean - self.photon_mean ** 2


def default_dt(p: SystemParams) -> float:
    return 0.002 / p.max_rate()


def evolve(
    p: SystemParams,
    rho0: DensityMatrix | None = None,
    t_final: float = 10.0,
    dt: float | None = None,
    sample_every: int = 50,
    fock_cutoff: int | None = None,
    check_cutoff: bool = True,
) -> ObservableSeries:
    """Integrate the master equation with fixed-step RK4 and sample observables.

    Starts from the cavity vacuum with every molecule in ``|3>`` unless
    ``rho0`` is given.  Raises :class:`CutoffBreach` if the top Fock level
    ever holds more than 1e-4 of the population, and :class:`NonPhysical` if
    the trace drifts by more than 1e-6.
    """
    p = validate_params(p)
    if rho0 is None:
        layout = make_layout(p, fock_cutoff)
        rho0 = initial_state(layout)
    layout = rho0.layout
    if dt is None:
        dt = default_dt(p)
    if not dt > 0 or not t_final > 0:
        raise ValueError("dt and t_final must be positive")
    n_steps = int(round(t_final / dt))
    dt = t_final / n_steps
    sample_every = max(1, int(sample_every))

    me = MasterEquation(p, layout)
    n_op = me.n
    n_diag = np.real(n_op.diagonal())
    rho = np.array(rho0.data, dtype=complex)
    top_slice = slice((layout.fock_cutoff - 1) * layout.molecular_dim, layout.total_dim)

    a_csr = sp.csr_matrix(me.a)
    times, mean, sq, pops, amp = [], [], [], [], []
    diag = {"max_trace_drift": 0.0, "max_hermiticity_error": 0.0, "max_top_population": 0.0,
            "max_population_error": 0.0}

    def record(step):
        t = step * dt
        d = np.real(np.diagonal(rho))
        tr = d.sum()
        drift = abs(tr - 1.0)
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        top = float(d[top_slice].sum())
        diag["max_trace_drift"] = max(diag["max_trace_drift"], drift)
        diag["max_hermiticity_error"] = max(diag["max_hermiticity_error"], herm)
        diag["max_top_population"] = max(diag["max_top_population"], top)
        if check_cutoff and top > TOP_POPULATION_LIMIT:
            raise CutoffBreach(top, layout.fock_cutoff, t)
        if drift > TRACE_DRIFT_LIMIT:
            raise NonPhysical(f"trace drifted to {tr!r} at t={t:.4g}")
        times.append(t)
        mean.append(float(n_diag @ d))
        sq.append(float((n_diag ** 2) @ d))
        amp.append(complex(a_csr.multiply(rho.T).sum()))
        pk = molecular_populations(rho, layout)
        if pk.size:
            err = float(np.max(np.abs(pk.reshape(-1, LEVELS).sum(axis=1) - 1.0)))
            diag["max_population_error"] = max(diag["max_population_error"], err)
        pops.append(pk)

    record(0)
    half = 0.5 * dt
    for step in range(1, n_steps + 1):
        k1 = me.rhs(rho)
        k2 = me.rhs(rho + half * k1)
        k3 = me.rhs(rho + half * k2)
        k4 = me.rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        # the fast Hermitian-only rhs amplifies anti-Hermitian rounding; project it out
        rho = 0.5 * (rho + rho.conj().T)
        if step % sample_every == 0 or step == n_steps:
            record(step)

    final = DensityMatrix(rho, layout)
    diag["final_min_eigenvalue"] = final.min_eigenvalue() if layout.total_dim <= 2000 else float("nan")
    return ObservableSeries(
        times=np.array(times),
        photon_mean=np.array(mean),
        photon_sq_mean=np.array(sq),
        populations=np.array(pops).reshape(len(times), layout.n_molecules, LEVELS),
        layout=layout,
        amplitude=np.array(amp),
        params=p,
        diagnostics=diag,
        final_state=final,
    )


def default_window(p: SystemParams | None) -> float:
    if p is None or p.kappa <= 0:
        return 2.0
    return 2.0 / p.kappa


def steady_state_observables(series: ObservableSeries, tol: float = 1e-3, window: float | None = None):
    """Trailing-window steady state of an exact run.

    Returns ``(photon_mean_ss, photon_var_ss, populations_ss)``; raises
    :class:`~enantiocav.errors.NotConverged` if the photon number is not flat.
    """
    from .observables import PhysicalSeries, detect_steady_state

    if window is None:
        window = default_window(series.params)
    phys = PhysicalSeries(
        times=series.times,
        photon_mean=series.photon_mean,
        photon_var=series.photon_var,
        populations=series.populations,
    )
    rep = detect_steady_state(phys, tol=tol, window=window)
    return rep.photon_mean, rep.photon_var, rep.populations
