"""Generalized Gell-Mann matrices and discrete phase-space sampling.

Ordering of the ``D**2 - 1`` matrices is fixed: every symmetric matrix
``Lambda^R_{a,b}`` (``a > b``), then every antisymmetric ``Lambda^I_{a,b}``, then
the diagonal ``Lambda^D_k``; the off-diagonal blocks run over ``(a, b)`` in
lexicographic order.  For ``D = 3`` that is::

    0: R21  1: R31  2: R32  3: I21  4: I31  5: I32  6: D1  7: D2

Note this differs from the interleaved per-molecule layout used by the
stochastic engine (``R21, I21, R31, I31, R32, I32, D1, D2``); see
:data:`ENGINE_LABELS`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooSmall, InvalidState, LengthMismatch, NonHermitian, TraceNotOne

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class GgmBasis:
    """The traceless Hermitian basis for ``dim``-level systems.

    ``matrices`` has shape ``(dim**2 - 1, dim, dim)``.  ``eigenvalues[mu]`` and
    ``eigenvectors[mu]`` (columns) diagonalize ``matrices[mu]``.  ``labels`` holds
    a short name per matrix, e.g. ``"R31"`` or ``"D2"``.
    """

    dim: int
    matrices: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: tuple = field(default=())

    def __len__(self):
        return self.matrices.shape[0]

    def index(self, label: str) -> int:
        return self.labels.index(label)


def _offdiag_pairs(dim):
    return [(a, b) for a in range(1, dim + 1) for b in range(1, a)]


def build_ggm_basis(dim: int) -> GgmBasis:
    """Construct the ``dim**2 - 1`` generalized Gell-Mann matrices with eigensystems.

    For ``dim = 2`` these are the Pauli matrices; for ``dim = 3`` the diagonal
    members are ``diag(1, -1, 0)`` and ``diag(1, 1, -2)/sqrt(3)``.
    """
    if dim < 2:
        raise DimensionTooSmall(f"Gell-Mann basis needs dim >= 2, got {dim}")
    pairs = _offdiag_pairs(dim)
    n = dim * dim - 1
    mats = np.zeros((n, dim, dim), dtype=complex)
    evals = np.zeros((n, dim))
    evecs = np.zeros((n, dim, dim), dtype=complex)
    labels = []
    eye = np.eye(dim)
    s = 1.0 / np.sqrt(2.0)

    mu = 0
    for kind in ("R", "I"):
        for a, b in pairs:
            i, j = a - 1, b - 1
            if kind == "R":
                # |b><a| + |a><b|, eigenvectors (|a> +- |b>)/sqrt2
                mats[mu, j, i] = mats[mu, i, j] = 1.0
                plus = s * (eye[:, i] + eye[:, j])
                minus = s * (eye[:, i] - eye[:, j])
            else:
                # -i(|b><a| - |a><b|), eigenvectors (|b> +- i|a>)/sqrt2
                mats[mu, j, i] = -1j
                mats[mu, i, j] = 1j
                plus = s * (eye[:, j] + 1j * eye[:, i])
                minus = s * (eye[:, j] - 1j * eye[:, i])
            rest = [eye[:, k] for k in range(dim) if k not in (i, j)]
            evals[mu] = [1.0, -1.0] + [0.0] * (dim - 2)
            evecs[mu] = np.column_stack([plus, minus] + rest)
            labels.append(f"{kind}{a}{b}")
            mu += 1
    for k in range(1, dim):
        diag = np.zeros(dim)
        diag[:k] = 1.0
        diag[k] = -k
        diag *= np.sqrt(2.0 / (k * (k + 1)))
        mats[mu] = np.diag(diag)
        evals[mu] = diag
        evecs[mu] = eye.astype(complex)
        labels.append(f"D{k}")
        mu += 1

    for arr in (mats, evals, evecs):
        arr.setflags(write=False)
    return GgmBasis(dim, mats, evals, evecs, tuple(labels))


def expand_density(basis: GgmBasis, lam) -> np.ndarray:
    """Density matrix ``(I + (D/2) sum_mu lam_mu Lambda_mu) / D``.

    Unit trace and Hermitian for any real ``lam``; positivity is not enforced
    because sampled phase-space points need not be physical states.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(basis),):
        raise LengthMismatch(f"expected {len(basis)} components, got shape {lam.shape}")
    d = basis.dim
    return np.eye(d) / d + 0.5 * np.tensordot(lam, basis.matrices, axes=1)


def _check_density(rho, dim):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise LengthMismatch(f"expected a {dim}x{dim} matrix, got shape {rho.shape}")
    asym = np.max(np.abs(rho - rho.conj().T))
    if asym > HERMITIAN_TOL:
        raise NonHermitian(f"matrix deviates from Hermitian by {asym:.3e}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise TraceNotOne(f"trace is {tr!r}")
    return rho


def ggm_expectations(basis: GgmBasis, rho) -> np.ndarray:
    """``lam_mu = Tr(Lambda_mu rho)`` for a Hermitian unit-trace ``rho``."""
    rho = _check_density(rho, basis.dim)
    return np.einsum("mij,ji->m", basis.matrices, rho).real


def eigen_probabilities(basis: GgmBasis, rho) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per matrix, its distinct eigenvalues and the probability of each in ``rho``.

    Probabilities of degenerate eigenvectors are pooled.
    """
    rho = _check_density(rho, basis.dim)
    w = np.linalg.eigvalsh(rho)
    if w.min() < -PSD_TOL:
        raise InvalidState(f"state has negative eigenvalue {w.min():.3e}")
    out = []
    for vals, vecs in zip(basis.eigenvalues, basis.eigenvectors):
        probs = np.einsum("ia,ij,ja->a", vecs.conj(), rho, vecs).real
        distinct, inverse = np.unique(np.round(vals, 12), return_inverse=True)
        pooled = np.zeros(len(distinct))
        np.add.at(pooled, inverse, probs)
        pooled = np.clip(pooled, 0.0, None)
        pooled /= pooled.sum()
        # exact eigenvalues, not the rounded keys
        exact = np.array([vals[inverse == k][0] for k in range(len(distinct))])
        out.append((exact, pooled))
    return out


def sample_initial_lambdas(basis: GgmBasis, rho0, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw discrete phase-space initial values for one molecule.

    Each component ``mu`` is drawn independently: eigenvalue ``lambda_a`` of
    ``Lambda_mu`` with probability ``<eta_a| rho0 |eta_a>``.  With ``size`` given
    the result has shape ``(*size, D**2 - 1)``.
    """
    return draw_lambdas(eigen_probabilities(basis, rho0), rng, size)


def draw_lambdas(table, rng: np.random.Generator, size=None) -> np.ndarray:
    """Sample from a precomputed :func:`eigen_probabilities` table."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    out = np.empty(shape + (len(table),))
    for mu, (vals, probs) in enumerate(table):
        if len(vals) == 1 or probs.max() == 1.0:
            out[..., mu] = vals[np.argmax(probs)]
        else:
            out[..., mu] = rng.choice(vals, size=shape, p=probs)
    return out


# Per-molecule layout of the stochastic engine, as indices into the D=3 basis.
ENGINE_LABELS = ("R21", "I21", "R31", "I31", "R32", "I32", "D1", "D2")


def engine_order(basis: GgmBasis) -> np.ndarray:
    """Indices mapping basis order onto :data:`ENGINE_LABELS` (``D = 3`` only)."""
    if basis.dim != 3:
        raise DimensionTooSmall("the engine layout is defined for three-level molecules")
    return np.array([basis.index(lbl) for lbl in ENGINE_LABELS])


def ket(dim: int, level: int) -> np.ndarray:
    """Projector ``|level><level|`` with 1-based ``level``."""
    rho = np.zeros((dim, dim), dtype=complex)
    rho[level - 1, level - 1] = 1.0
    return rho
