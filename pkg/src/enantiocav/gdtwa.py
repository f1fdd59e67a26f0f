"""Generalized discrete truncated Wigner (GDTWA) trajectories.

Every molecule carries the eight Gell-Mann expectation values in the order
``R21, I21, R31, I31, R32, I32, D1, D2``; the cavity carries one complex
amplitude.  Initial values are drawn from the discrete phase-space rule, the
mean-field equations are integrated with additive complex Wiener noise on
the cavity, and symmetric-ordered moments are accumulated over trajectories.

Two facts shape the implementation:

* The printed mean-field system has one sign/trig slip: in ``d(I32)/dt`` the
  ``Omega32 (sqrt3 D2 - D1)`` term multiplies ``cos(phi)``, not ``sin(phi)``.
  The kernel below uses the form confirmed against the commutator
  ``Tr[Lambda (-i[H, rho])]`` of the exact generator (see the drift-oracle
  tests).
* For fixed ``alpha(t)`` the molecular equations are linear and identical
  for every molecule of a given handedness, so within one trajectory the
  per-chirality sums of the lambda vectors obey the very same equations.
  ``mode="collective"`` integrates those sums (two 8-vectors instead of
  ``8 N`` numbers); it reproduces ``mode="molecule"`` to rounding error.

Reproducibility: trajectory ``j`` draws its initial sample and all of its
noise from ``SeedSequence(master_seed, spawn_key=(j,))``.  Trajectories are
processed in blocks of ``block_size``; block partial sums are combined in
block order, so output does not depend on the number of workers.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from . import ggm
from .errors import BlowUp, ConfigError, TooManyBlowUps
from .params import SystemParams, validate_params

N_COMPONENTS = 8
SQRT3 = math.sqrt(3.0)
MAX_BLOWUP_FRACTION = 1e-3
NOISE_CHUNK = 2048

_BASIS = ggm.build_ggm_basis(3)
_TO_ENGINE = ggm.engine_order(_BASIS)


# -- kernels -------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _molecule_drift(lam, ar, ai, cphi, sphi, d31, d32, o31, o32, g, out):
    r21, i21, r31, i31, r32, i32, dd1, dd2 = lam[0], lam[1], lam[2], lam[3], lam[4], lam[5], lam[6], lam[7]
    s3 = 1.7320508075688772
    d21 = d31 - d32
    out[0] = d21 * i21 + 2.0 * g * dd1 * ai + o32 * (i31 * cphi - r31 * sphi) + o31 * i32
    out[1] = -d21 * r21 - 2.0 * g * dd1 * ar - o32 * (r31 * cphi + i31 * sphi) + o31 * r32
    out[2] = d31 * i31 - g * (r32 * ai + i32 * ar) + o32 * (r21 * sphi + i21 * cphi)
    out[3] = (-d31 * r31 + g * (r32 * ar - i32 * ai) - o32 * (r21 * cphi - i21 * sphi)
              - o31 * (dd1 + s3 * dd2))
    out[4] = d32 * i32 + g * (r31 * ai - i31 * ar) + o32 * (s3 * dd2 - dd1) * sphi - o31 * i21
    out[5] = -d32 * r32 + g * (r31 * ar + i31 * ai) - o32 * (s3 * dd2 - dd1) * cphi - o31 * r21
    out[6] = -2.0 * g * (r21 * ai - i21 * ar) + o32 * (r32 * sphi - i32 * cphi) + o31 * i31
    out[7] = s3 * o32 * (i32 * cphi - r32 * sphi) + s3 * o31 * i31


@numba.njit(cache=True, nogil=True)
def _system_drift(lam, alpha, cphi, sphi, prm, dlam):
    """Drift of one trajectory; ``lam`` is (K, 8), returns d(alpha)/dt."""
    d31, d32, o31, o32, g, dc, kappa, eta = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7]
    ar = alpha.real
    ai = alpha.imag
    sr = 0.0
    si = 0.0
    for k in range(lam.shape[0]):
        _molecule_drift(lam[k], ar, ai, cphi[k], sphi[k], d31, d32, o31, o32, g, dlam[k])
        sr += lam[k, 0]
        si += lam[k, 1]
    return -(1j * dc + 0.5 * kappa) * alpha - 1j * eta - 0.5j * g * (sr + 1j * si)


@numba.njit(cache=True, nogil=True)
def _advance(lam, alpha, alive, cphi, sphi, prm, noise, dt, heun, guard):
    """Integrate ``noise.shape[0]`` steps for every live trajectory in place.

    ``lam`` (B, K, 8), ``alpha`` (B,), ``noise`` (steps, B, 2) standard normals.
    Trajectories whose amplitude leaves ``|alpha| <= guard`` are frozen and
    marked dead.
    """
    n_steps = noise.shape[0]
    n_traj, n_groups, n_comp = lam.shape
    amp = 0.5 * math.sqrt(prm[6] * dt)
    k1 = np.empty((n_groups, n_comp))
    k2 = np.empty((n_groups, n_comp))
    pred = np.empty((n_groups, n_comp))
    for b in range(n_traj):
        if not alive[b]:
            continue
        y = lam[b]
        a = alpha[b]
        for s in range(n_steps):
            dw = amp * (noise[s, b, 0] + 1j * noise[s, b, 1])
            ka = _system_drift(y, a, cphi, sphi, prm, k1)
            if heun:
                for k in range(n_groups):
                    for c in range(n_comp):
                        pred[k, c] = y[k, c] + dt * k1[k, c]
                kb = _system_drift(pred, a + dt * ka + dw, cphi, sphi, prm, k2)
                for k in range(n_groups):
                    for c in range(n_comp):
                        y[k, c] += 0.5 * dt * (k1[k, c] + k2[k, c])
                a = a + 0.5 * dt * (ka + kb) + dw
            else:
                for k in range(n_groups):
                    for c in range(n_comp):
                        y[k, c] += dt * k1[k, c]
                a = a + dt * ka + dw
            if not abs(a) <= guard:
                alive[b] = False
                break
        alpha[b] = a


# -- single-trajectory API -----------------------------------------------------

class Cavity(enum.Enum):
    VACUUM = "vacuum"
    COHERENT = "coherent"


@dataclass(frozen=True)
class CavityState:
    """Initial optical state: vacuum, or coherent with mean photon number and phase."""

    kind: Cavity = Cavity.VACUUM
    mean_n: float = 0.0
    phase: float = 0.0

    @classmethod
    def vacuum(cls):
        return cls()

    @classmethod
    def coherent(cls, mean_n, phase=0.0):
        return cls(Cavity.COHERENT, float(mean_n), float(phase))

    @property
    def center(self) -> complex:
        if self.kind is Cavity.VACUUM:
            return 0j
        return math.sqrt(self.mean_n) * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass
class TrajectoryState:
    lambdas: np.ndarray  # (n_molecules, 8), engine order
    alpha: complex

    def copy(self):
        return TrajectoryState(self.lambdas.copy(), self.alpha)


def _param_vector(p: SystemParams) -> np.ndarray:
    return np.array([p.delta31, p.delta32, p.omega31, p.omega32, p.g, p.delta_c, p.kappa, p.eta])


def drift(p: SystemParams, s: TrajectoryState):
    """Deterministic mean-field derivative ``(dlambda/dt, dalpha/dt)``.

    ``dalpha/dt = -(i Delta_c + kappa/2) alpha - i eta
    - i (g/2) sum_n (R21_n + i I21_n)``.
    """
    phases = np.array(p.phases(), dtype=float)
    lam = np.ascontiguousarray(s.lambdas, dtype=float).reshape(len(phases), N_COMPONENTS)
    out = np.empty_like(lam)
    da = _system_drift(lam, complex(s.alpha), np.cos(phases), np.sin(phases), _param_vector(p), out)
    return out, complex(da)


def step(p: SystemParams, s: TrajectoryState, dt: float, rng: np.random.Generator,
         guard: float = 1e3) -> TrajectoryState:
    """One Euler-Maruyama step; only the cavity amplitude receives noise."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    dlam, da = drift(p, s)
    xi = rng.standard_normal(2)
    dw = 0.5 * math.sqrt(p.kappa * dt) * complex(xi[0], xi[1])
    new = TrajectoryState(s.lambdas + dt * dlam, s.alpha + dt * da + dw)
    if not abs(new.alpha) <= guard:
        raise BlowUp(f"|alpha| = {abs(new.alpha):.3e} exceeds guard {guard:g}")
    return new


def sample_alpha(cavity: CavityState, rng: np.random.Generator, size=None):
    """Wigner sample of the cavity amplitude: complex Gaussian, variance 1/4 per quadrature."""
    xi = rng.standard_normal((2,) if size is None else (2, size))
    return cavity.center + 0.5 * (xi[0] + 1j * xi[1])


def sample_molecules(mol_state, n_molecules: int, rng: np.random.Generator, table=None) -> np.ndarray:
    """Discrete phase-space samples for ``n_molecules`` molecules, engine order.

    ``table`` is an optional precomputed ``ggm.eigen_probabilities`` of ``mol_state``.
    """
    if table is None:
        table = ggm.eigen_probabilities(_BASIS, mol_state)
    lam = ggm.draw_lambdas(table, rng, size=(n_molecules,))
    return lam[..., _TO_ENGINE]


def sample_initial_trajectory(p: SystemParams, mol_state=None, cavity: CavityState | None = None,
                              rng: np.random.Generator | None = None) -> TrajectoryState:
    """Draw one trajectory's initial condition (molecules default to ``|3>``, cavity to vacuum)."""
    if mol_state is None:
        mol_state = ggm.ket(3, 3)
    cavity = cavity or CavityState.vacuum()
    rng = rng if rng is not None else np.random.default_rng()
    alpha = complex(sample_alpha(cavity, rng))
    lam = sample_molecules(mol_state, p.n_molecules, rng)
    return TrajectoryState(lam, alpha)


# -- ensembles -----------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble settings.

    ``dt=None`` selects ``0.001 / max_rate`` for Euler and ``0.01 / max_rate``
    for Heun.  ``mode`` is ``"molecule"``, ``"collective"`` or ``"auto"``
    (collective above :attr:`collective_threshold` molecules).
    """

    n_trajectories: int = 1000
    t_final: float = 10.0
    dt: float | None = None
    master_seed: int = 0
    sample_every: int = 50
    guard: float = 1e3
    scheme: str = "heun"
    mode: str = "auto"
    block_size: int = 200
    workers: int = 1
    collective_threshold: int = 8

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.dt is not None and self.t_final < self.dt:
            raise ConfigError("t_final must be >= dt")
        if self.scheme not in ("euler", "heun"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.mode not in ("auto", "molecule", "collective"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.sample_every < 1 or self.block_size < 1 or self.workers < 1:
            raise ConfigError("sample_every, block_size and workers must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must fit in 64 bits")

    def resolved_dt(self, p: SystemParams) -> float:
        if self.dt is not None:
            return self.dt
        scale = 0.001 if self.scheme == "euler" else 0.01
        return scale / p.max_rate()

    def to_dict(self):
        return asdict(self)


@dataclass
class WignerMomentSeries:
    """Trajectory averages at the sampled times.

    ``m_abs6``/``m_abs8`` are kept for standard errors of the variance.
    ``block_abs2``/``block_counts`` (n_blocks, n_times) hold per-block sums
    of ``|alpha|^2`` and live-trajectory counts, for batch-means errors of
    time-averaged estimates.
    ``lambda_means`` has shape ``(n_times, n_molecules, 8)``; in collective
    mode every molecule of one handedness carries that handedness' average.
    """

    times: np.ndarray
    m_alpha: np.ndarray
    m_abs2: np.ndarray
    m_abs4: np.ndarray
    m_abs6: np.ndarray
    m_abs8: np.ndarray
    lambda_means: np.ndarray
    n_effective: int
    n_trajectories: int
    blowups: int = 0
    block_abs2: np.ndarray | None = None
    block_counts: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Random stream of trajectory ``index``."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def _groups(p: SystemParams, mode: str):
    """Group phases and the molecule->group map for the chosen mode."""
    phases = p.phases()
    if mode == "molecule":
        return np.array(phases, dtype=float), np.arange(len(phases))
    groups, member = [], []
    for count, phi in ((p.n_left, p.phi_L), (p.n_right, p.phi_R)):
        if count:
            member.extend([len(groups)] * count)
            groups.append(phi)
    return np.array(groups, dtype=float), np.array(member, dtype=int)


def _run_block(p, cfg, mode, mol_state, cavity, first, count, n_steps, dt):
    phases, member = _groups(p, mode)
    n_groups = len(phases)
    n_mol = p.n_molecules
    rngs = [trajectory_rng(cfg.master_seed, first + j) for j in range(count)]
    table = ggm.eigen_probabilities(_BASIS, mol_state)
    alpha = np.empty(count, dtype=complex)
    lam = np.zeros((count, n_groups, N_COMPONENTS))
    for j, rng in enumerate(rngs):
        alpha[j] = sample_alpha(cavity, rng)
        if n_mol:
            sampled = sample_molecules(mol_state, n_mol, rng, table)
            np.add.at(lam[j], member, sampled)
    alive = np.ones(count, dtype=bool)
    prm = _param_vector(p)
    cphi, sphi = np.cos(phases), np.sin(phases)
    heun = cfg.scheme == "heun"

    n_samples = n_steps // cfg.sample_every + 1
    sums = {
        "alpha": np.zeros(n_samples, dtype=complex),
        "abs2": np.zeros(n_samples),
        "abs4": np.zeros(n_samples),
        "abs6": np.zeros(n_samples),
        "abs8": np.zeros(n_samples),
        "lam": np.zeros((n_samples, n_groups, N_COMPONENTS)),
        "count": np.zeros(n_samples),
    }

    def record(k):
        a = alpha[alive]
        x = a.real ** 2 + a.imag ** 2
        sums["alpha"][k] = a.sum()
        sums["abs2"][k] = x.sum()
        sums["abs4"][k] = (x * x).sum()
        sums["abs6"][k] = (x * x * x).sum()
        sums["abs8"][k] = ((x * x) * (x * x)).sum()
        sums["lam"][k] = lam[alive].sum(axis=0)
        sums["count"][k] = a.size

    se = cfg.sample_every
    per_chunk = se * max(1, NOISE_CHUNK // se)
    record(0)
    for start in range(0, n_steps, per_chunk):
        chunk = min(per_chunk, n_steps - start)
        noise = np.empty((chunk, count, 2))
        for j, rng in enumerate(rngs):
            noise[:, j, :] = rng.standard_normal((chunk, 2))
        for off in range(0, chunk, se):
            _advance(lam, alpha, alive, cphi, sphi, prm, noise[off:off + se], dt, heun, cfg.guard)
            record((start + off) // se + 1)
    return sums, int(alive.sum())


def run_ensemble(p: SystemParams, cfg: EnsembleConfig, mol_state=None,
                 cavity: CavityState | None = None) -> WignerMomentSeries:
    """Evolve ``cfg.n_trajectories`` trajectories and average their moments.

    The result is a deterministic function of the inputs (including
    ``cfg.master_seed``) and does not depend on ``cfg.workers``.
    Raises :class:`TooManyBlowUps` if more than 0.1% of trajectories exceed
    the amplitude guard.
    """
    p = validate_params(p)
    if mol_state is None:
        mol_state = ggm.ket(3, 3)
    mol_state = np.asarray(mol_state, dtype=complex)
    ggm.eigen_probabilities(_BASIS, mol_state)  # validates the state up front
    cavity = cavity or CavityState.vacuum()
    mode = cfg.mode
    if mode == "auto":
        mode = "collective" if p.n_molecules > cfg.collective_threshold else "molecule"

    # round the step count up to whole sampling intervals; t_final is kept exactly
    se = cfg.sample_every
    n_steps = max(1, int(round(cfg.t_final / cfg.resolved_dt(p))))
    n_steps = -(-n_steps // se) * se
    dt = cfg.t_final / n_steps
    n_samples = n_steps // se + 1

    blocks = [(start, min(cfg.block_size, cfg.n_trajectories - start))
              for start in range(0, cfg.n_trajectories, cfg.block_size)]
    args = (p, cfg, mode, mol_state, cavity)
    if cfg.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda b: _run_block(*args, b[0], b[1], n_steps, dt), blocks))
    else:
        results = [_run_block(*args, b[0], b[1], n_steps, dt) for b in blocks]

    n_eff = sum(r[1] for r in results)
    blowups = cfg.n_trajectories - n_eff
    if blowups > MAX_BLOWUP_FRACTION * cfg.n_trajectories:
        raise TooManyBlowUps(
            f"{blowups} of {cfg.n_trajectories} trajectories exceeded |alpha| > {cfg.guard:g}; "
            "reduce dt or check the parameters"
        )

    counts = np.sum(np.stack([r[0]["count"] for r in results]), axis=0)

    def total(key):
        acc = np.sum(np.stack([r[0][key] for r in results]), axis=0)
        return acc / counts.reshape((-1,) + (1,) * (acc.ndim - 1))

    phases, member = _groups(p, mode)
    lam_groups = total("lam")
    if mode == "collective":
        group_sizes = np.bincount(member, minlength=len(phases)).astype(float)
        lam_groups = lam_groups / group_sizes[None, :, None]
    lambda_means = lam_groups[:, member, :] if p.n_molecules else np.zeros((n_samples, 0, N_COMPONENTS))

    return WignerMomentSeries(
        times=np.arange(n_samples) * cfg.sample_every * dt,
        m_alpha=total("alpha"),
        m_abs2=total("abs2"),
        m_abs4=total("abs4"),
        m_abs6=total("abs6"),
        m_abs8=total("abs8"),
        lambda_means=lambda_means,
        n_effective=n_eff,
        n_trajectories=cfg.n_trajectories,
        blowups=blowups,
        block_abs2=np.stack([r[0]["abs2"] for r in results]),
        block_counts=np.stack([r[0]["count"] for r in results]),
        meta={"dt": dt, "n_steps": n_steps, "mode": mode, "scheme": cfg.scheme},
    )


def equation_count(p: SystemParams, dim: int = 3) -> int:
    """Coupled equations per trajectory, counting the complex amplitude once."""
    return (dim * dim - 1) * p.n_molecules + 1
