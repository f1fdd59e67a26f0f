import numpy as np
import pytest

from enantiocav import exact
from enantiocav.errors import CutoffBreach, CutoffTooSmall, LengthMismatch, TooManyMolecules
from enantiocav.params import reference_params

from oracles import dense_hamiltonian, dense_lindblad, random_pure


def test_layout_indexing():
    lay = exact.HilbertLayout(5, 1, 1)
    assert lay.total_dim == 45
    assert lay.index(2, (3, 1)) == 2 * 9 + 2 * 3 + 0
    with pytest.raises(LengthMismatch):
        lay.index(0, (1,))


def test_default_cutoff_covers_bare_cavity():
    p = reference_params()
    assert exact.default_fock_cutoff(p) >= 4 * (4 * 16 / 25 + 1)


def test_molecule_cap():
    with pytest.raises(TooManyMolecules):
        exact.make_layout(reference_params(n_left=3, n_right=2))


@pytest.mark.parametrize("counts", [(1, 0), (1, 1), (0, 2)])
def test_hamiltonian_matches_dense_oracle(counts, rng):
    p = reference_params(n_left=counts[0], n_right=counts[1], delta_c=0.3, delta31=-0.7, delta32=0.4,
                         phi_L=0.9, phi_R=2.1)
    lay = exact.make_layout(p, 6)
    H = exact.build_hamiltonian(p, lay).toarray()
    Hd, _, _ = dense_hamiltonian(p, 6)
    np.testing.assert_allclose(H, Hd, atol=1e-14)
    np.testing.assert_allclose(H, H.conj().T, atol=0)


def test_lindblad_rhs_matches_dense_oracle(rng):
    p = reference_params(n_left=1, n_right=1, delta_c=0.2, phi_L=0.4)
    nc = 5
    lay = exact.make_layout(p, nc)
    Hd, a, _ = dense_hamiltonian(p, nc)
    H = exact.build_hamiltonian(p, lay)
    for _ in range(5):
        rho = random_pure(rng, lay.total_dim)
        np.testing.assert_allclose(exact.lindblad_rhs(p, H, rho, lay), dense_lindblad(p, Hd, a, rho),
                                   atol=1e-12)
        # general (non-Hermitian) input too
        x = rng.normal(size=rho.shape) + 1j * rng.normal(size=rho.shape)
        np.testing.assert_allclose(exact.lindblad_rhs(p, H, x, lay), dense_lindblad(p, Hd, a, x), atol=1e-12)


def test_rhs_vanishes_at_bare_cavity_steady_state():
    p = reference_params(g=1.0, n_left=0, n_right=0, delta_c=0.7)
    lay = exact.make_layout(p, 40)
    alpha = -1j * p.eta / (1j * p.delta_c + p.kappa / 2)
    rho = exact.coherent_density(40, alpha)
    out = exact.lindblad_rhs(p, exact.build_hamiltonian(p, lay), rho, lay)
    assert np.linalg.norm(out) < 1e-8


def test_rhs_zero_without_dynamics(rng):
    p = reference_params(kappa=0.0, eta=0.0, omega31=0.0, omega32=0.0, n_left=1)
    lay = exact.make_layout(p, 4)
    H = 0 * exact.build_hamiltonian(p, lay)
    rho = random_pure(rng, lay.total_dim)
    assert np.abs(exact.lindblad_rhs(p, H, rho, lay)).max() == 0.0


def test_rhs_is_traceless(rng):
    p = reference_params(n_left=1, n_right=1)
    lay = exact.make_layout(p, 30)
    H = exact.build_hamiltonian(p, lay)
    mol = [random_pure(rng, 3), random_pure(rng, 3)]
    rho = exact.product_state(lay, exact.coherent_density(30, 0.8 + 0.3j), mol).data
    assert abs(np.trace(exact.lindblad_rhs(p, H, rho, lay))) < 1e-9


def test_dark_cavity_stays_dark():
    p = reference_params(eta=0.0, g=1.0, n_left=0, n_right=0)
    s = exact.evolve(p, t_final=1.0, dt=0.01, sample_every=10)
    assert np.all(s.photon_mean == 0.0)


def test_bare_cavity_relaxes_to_analytic_value():
    p = reference_params(n_left=0, n_right=0)
    s = exact.evolve(p, t_final=10.0, dt=0.005, sample_every=10)
    n_ss, var_ss, _ = exact.steady_state_observables(s, window=2.0)
    assert n_ss == pytest.approx(4 * p.eta ** 2 / p.kappa ** 2, rel=1e-3)
    assert var_ss == pytest.approx(n_ss, rel=1e-3)  # coherent state is Poissonian


def test_cutoff_breach_reports_suggestion():
    p = reference_params(n_left=0, n_right=0)
    with pytest.raises(CutoffBreach) as ei:
        exact.evolve(p, t_final=2.0, dt=0.01, fock_cutoff=4)
    assert ei.value.details["suggested_cutoff"] > 4
    assert ei.value.details["fock_cutoff"] == 4


def test_cutoff_too_small():
    p = reference_params()
    with pytest.raises(CutoffTooSmall):
        exact.build_hamiltonian(p, exact.HilbertLayout(1, 1, 0))


def test_conservation_and_population_bookkeeping():
    p = reference_params(n_left=1, n_right=1)
    s = exact.evolve(p, t_final=2.0, dt=0.005, sample_every=20, fock_cutoff=16)
    d = s.diagnostics
    assert d["max_trace_drift"] < 1e-6
    assert d["max_hermiticity_error"] < 1e-9
    assert d["max_population_error"] < 1e-8
    assert d["final_min_eigenvalue"] > -1e-8
    np.testing.assert_allclose(s.populations.sum(axis=-1), 1.0, atol=1e-8)
    # populations agree with the reduced single-molecule states
    rho = s.final_state.data
    for k in range(2):
        red = exact.reduced_molecule(rho, s.layout, k)
        np.testing.assert_allclose(np.real(np.diag(red)), s.populations[-1, k], atol=1e-12)


def test_amplitude_series_matches_trace():
    p = reference_params()
    s = exact.evolve(p, t_final=1.0, dt=0.005, sample_every=20)
    a = exact.annihilation(s.layout)
    assert s.amplitude[-1] == pytest.approx(np.trace(a @ s.final_state.data), abs=1e-12)


def test_steady_state_on_constant_series():
    from enantiocav.observables import PhysicalSeries, detect_steady_state

    t = np.linspace(0, 5, 51)
    ser = PhysicalSeries(t, np.full(51, 3.0), np.full(51, 1.5), np.full((51, 1, 3), 1 / 3))
    rep = detect_steady_state(ser, window=1.0)
    assert rep.converged and rep.photon_mean == 3.0 and rep.photon_var == 1.5
