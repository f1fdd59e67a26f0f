import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad
from scipy.special import eval_laguerre

from enantiocav import exact, ggm
from enantiocav.errors import ComputeError, JensenViolation, NotConverged
from enantiocav.observables import (
    PhysicalSeries, detect_steady_state, photon_mean_from_wigner, photon_var_from_wigner,
    photon_var_stderr, populations_from_lambdas, window_mean_stderr,
)

SQ3 = math.sqrt(3.0)
BASIS = ggm.build_ggm_basis(3)
ORDER = ggm.engine_order(BASIS)


def coherent_wigner_moments(beta):
    """Analytic ``E|alpha|^2`` and ``E|alpha|^4`` of a coherent-state Wigner function."""
    b2 = abs(beta) ** 2
    return b2 + 0.5, b2 ** 2 + 2 * b2 + 0.5


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0 + 1.0j, 2.0, 3.0j])
def test_wigner_identities_match_operator_averages(beta):
    nc = 60
    rho = exact.coherent_density(nc, beta)
    n = np.arange(nc)
    p_n = np.real(np.diag(rho))
    mean_op = p_n @ n
    var_op = p_n @ n ** 2 - mean_op ** 2
    m2, m4 = coherent_wigner_moments(beta)
    assert photon_mean_from_wigner(m2) == pytest.approx(mean_op, abs=1e-10)
    assert photon_var_from_wigner(m2, m4) == pytest.approx(var_op, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fock_state_identities(n):
    # radial moments of the Fock Wigner function (2/pi)(-1)^n L_n(4r^2) exp(-2r^2)
    def moment(k):
        w = lambda r: (2 / np.pi) * (-1) ** n * eval_laguerre(n, 4 * r * r) * np.exp(-2 * r * r)
        return quad(lambda r: r ** (2 * k) * w(r) * 2 * np.pi * r, 0, np.inf)[0]

    m2, m4 = moment(1), moment(2)
    assert photon_mean_from_wigner(m2) == pytest.approx(n, abs=1e-9)
    assert photon_var_from_wigner(m2, m4, rtol=1.0) == pytest.approx(0.0, abs=1e-8)


def test_wigner_identities_on_sampled_thermal_state(rng):
    # thermal state with mean nbar: Wigner is Gaussian with variance (nbar + 1/2)/2 per quadrature
    nbar, n = 1.3, 400_000
    s = math.sqrt((nbar + 0.5) / 2)
    a = rng.normal(scale=s, size=n) + 1j * rng.normal(scale=s, size=n)
    x = np.abs(a) ** 2
    mean = photon_mean_from_wigner(x.mean())
    var = photon_var_from_wigner(x.mean(), (x * x).mean())
    err = photon_var_stderr(n, x.mean(), (x ** 2).mean(), (x ** 3).mean(), (x ** 4).mean())
    assert abs(mean - nbar) < 4 * x.std() / math.sqrt(n)
    assert abs(var - (nbar ** 2 + nbar)) < 4 * err


def test_vacuum_values():
    assert photon_mean_from_wigner(0.5) == 0.0
    assert photon_var_from_wigner(0.5, 0.5) == 0.0


def test_jensen_violation():
    with pytest.raises(JensenViolation):
        photon_var_from_wigner(2.0, 3.0)


@given(st.floats(0, 1e3), st.floats(-1e3, 1e3))
def test_mean_is_affine(x, c):
    assert photon_mean_from_wigner(x + c) == pytest.approx(photon_mean_from_wigner(x) + c, abs=1e-9)


def test_population_examples():
    np.testing.assert_allclose(populations_from_lambdas(np.zeros(8)), [1 / 3] * 3)
    lam = np.zeros(8)
    lam[7] = -2 / SQ3
    np.testing.assert_allclose(populations_from_lambdas(lam), [0, 0, 1], atol=1e-15)
    lam = np.zeros(8)
    lam[6], lam[7] = 1.0, 1 / SQ3
    np.testing.assert_allclose(populations_from_lambdas(lam), [1, 0, 0], atol=1e-15)


@settings(max_examples=100)
@given(arrays(float, 8, elements=st.floats(-2, 2)))
def test_populations_equal_expansion_diagonal(lam_basis):
    rho = ggm.expand_density(BASIS, lam_basis)
    got = populations_from_lambdas(lam_basis[ORDER])
    np.testing.assert_allclose(got, np.real(np.diag(rho)), atol=1e-12)


def _series(values, dt=0.1, stderr=None):
    n = len(values)
    return PhysicalSeries(np.arange(n) * dt, np.asarray(values, float), np.ones(n), np.full((n, 1, 3), 1 / 3),
                          photon_mean_stderr=stderr)


def test_constant_series_converges():
    rep = detect_steady_state(_series(np.full(50, 2.0)), window=1.0)
    assert rep.converged and rep.photon_mean == 2.0 and rep.drift == 0.0


def test_ramp_does_not_converge():
    with pytest.raises(NotConverged) as ei:
        detect_steady_state(_series(np.linspace(0, 5, 50)), window=1.0)
    assert ei.value.details["drift"] > 0
    rep = detect_steady_state(_series(np.linspace(0, 5, 50)), window=1.0, strict=False)
    assert not rep.converged


def test_short_series_rejected():
    with pytest.raises(ValueError):
        detect_steady_state(_series(np.ones(5)), window=1.0)


def test_noise_floor_widens_threshold():
    vals = 2.0 + 0.01 * np.sin(np.arange(50))
    with pytest.raises(NotConverged):
        detect_steady_state(_series(vals), window=1.0)
    rep = detect_steady_state(_series(vals, stderr=np.full(50, 0.01)), window=1.0)
    assert rep.converged


def test_significant_negative_variance_aborts():
    n = 30
    ser = PhysicalSeries(np.arange(n) * 0.1, np.ones(n), np.zeros(n), np.full((n, 1, 3), 1 / 3),
                         clipped=np.ones(n, bool), significant_clip=np.ones(n, bool))
    with pytest.raises(ComputeError):
        detect_steady_state(ser, window=1.0)


def test_batch_means_error(rng):
    blocks, n_t = 40, 20
    x = rng.normal(size=(blocks, 1)) + np.zeros((blocks, n_t))
    ser = _series(np.zeros(n_t))
    ser.block_photon_mean = x
    ser.block_weights = np.full((blocks, n_t), 10.0)
    got = window_mean_stderr(ser, np.ones(n_t, bool))
    assert got == pytest.approx(x[:, 0].std(ddof=1) / math.sqrt(blocks), rel=1e-12)
    ser.block_photon_mean = x[:1]
    ser.block_weights = ser.block_weights[:1]
    assert window_mean_stderr(ser, np.ones(n_t, bool)) is None
