import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from enantiocav import analysis as A
from enantiocav import gdtwa
from enantiocav.errors import ConfigError, CutoffBreach, NonRealizable, TooManyMolecules
from enantiocav.params import reference_params


def test_excess_examples():
    assert A.excess_to_counts(0.0, 200) == (100, 100)
    assert A.excess_to_counts(-1.0, 200) == (200, 0)
    assert A.excess_to_counts(0.01, 200) == (99, 101)


def test_excess_not_realizable():
    with pytest.raises(NonRealizable):
        A.excess_to_counts(0.003, 200)
    with pytest.raises(NonRealizable):
        A.excess_to_counts(1.5, 10)


@given(st.integers(1, 500), st.data())
def test_excess_round_trip(n, data):
    k = data.draw(st.integers(0, n))
    nl, nr = A.excess_to_counts(2 * k / n - 1, n)
    assert (nl, nr) == (n - k, k)
    if n:
        assert A.counts_to_excess(nl, nr) == pytest.approx(2 * k / n - 1, abs=1e-12)


def test_realizable_grid():
    g = A.realizable_grid(200, stride=5)
    assert len(g) == 37 and 0.0 in g
    np.testing.assert_allclose(np.diff(g), 0.05)
    assert g[0] == pytest.approx(-0.9) and g[-1] == pytest.approx(0.9)
    for P in g:
        A.excess_to_counts(P, 200)


def _result(x, y, var, stderr=None, coherent=None, n_total=200):
    n = len(x)
    return A.SweepResult(
        excess_grid=np.asarray(x, float), n_left=np.zeros(n, int), n_right=np.zeros(n, int),
        photon_ss=np.asarray(y, float), photon_var_ss=np.asarray(var, float),
        photon_ss_stderr=np.zeros(n) if stderr is None else np.asarray(stderr, float),
        photon_var_ss_stderr=np.zeros(n), converged=np.ones(n, bool),
        coherent_ss=np.asarray(y, float) if coherent is None else np.asarray(coherent, float),
        n_total=n_total, eta=0.0, engine=A.Engine.GDTWA)


def test_uncertainty_of_a_line():
    x = np.linspace(-0.5, 0.5, 11)
    u = A.uncertainty_curve(_result(x, 3.0 * x + 7.0, np.full(11, 4.0)))
    np.testing.assert_allclose(u.values, 2.0 / 3.0, rtol=1e-12)


@given(st.floats(0.01, 100))
def test_uncertainty_scale_invariance(c):
    x = np.linspace(-0.9, 0.9, 13)
    y = 5 + 4 * x + 2 * x ** 2
    v = 1 + x ** 2
    base = A.uncertainty_curve(_result(x, y, v)).values
    scaled = A.uncertainty_curve(_result(x, c * y, c * c * v)).values
    np.testing.assert_allclose(scaled, base, rtol=1e-9)


def test_zero_slope_is_infinite():
    x = np.linspace(-1, 1, 5)
    u = A.uncertainty_curve(_result(x, np.ones(5), np.ones(5)))
    assert np.all(np.isinf(u.values))
    with pytest.raises(ConfigError):
        A.uncertainty_curve(_result(x[:2], np.ones(2), np.ones(2)))


def test_uncertainty_uses_one_sided_ends():
    x = np.array([0.0, 0.1, 0.2, 0.3])
    y = x ** 2
    u = A.uncertainty_curve(_result(x, y, np.ones(4)))
    np.testing.assert_allclose(u.slopes, [0.1, 0.2, 0.4, 0.5])


def test_parabola_vertex_recovered():
    x = A.realizable_grid(200, stride=5)
    x0 = -0.123
    y = 40 * (x - x0) ** 2
    z = A.find_zero_crossing(_result(x, y, np.ones_like(x), stderr=np.full(len(x), 0.01)))
    assert z is not None
    assert abs(z.location - x0) < 0.05 / 10


def test_no_zero_when_minimum_is_high_or_at_the_edge():
    x = np.linspace(-1, 1, 21)
    z = A.find_zero_crossing(_result(x, 1 + x ** 2, np.ones(21), stderr=np.full(21, 0.01)))
    assert z is None
    z = A.find_zero_crossing(_result(x, (x + 1) ** 2, np.ones(21), stderr=np.full(21, 0.01)))
    assert z is None


def test_incoherent_remainder_raises_the_floor():
    x = np.linspace(-1, 1, 21)
    y = 0.05 + 10 * (x - 0.02) ** 2
    coherent = y - 0.05
    assert A.find_zero_crossing(_result(x, y, np.ones(21), stderr=np.full(21, 0.001))) is None
    z = A.find_zero_crossing(_result(x, y, np.ones(21), stderr=np.full(21, 0.001), coherent=coherent))
    assert z is not None and abs(z.location - 0.02) < 0.01


def test_point_seeds_are_distinct_and_stable():
    seeds = [A.point_seed(5, j) for j in range(50)]
    assert len(set(seeds)) == 50
    assert seeds == [A.point_seed(5, j) for j in range(50)]


def test_single_molecule_exact_sweep_orders_chiralities():
    res = A.sweep_excess(reference_params(), 1, [-1.0, 1.0], engine="exact",
                         cfg=A.ExactSettings(dt=0.005))
    assert res.converged.all()
    assert res.photon_ss[1] > res.photon_ss[0]
    assert res.uncertainty is None


def test_exact_sweep_refuses_large_ensembles():
    with pytest.raises(TooManyMolecules):
        A.sweep_excess(reference_params(), 6, [0.0], engine="exact")


def test_errors_name_the_grid_point():
    with pytest.raises(CutoffBreach) as ei:
        A.sweep_molecule_number(reference_params(n_left=0), [0, 1], engine="exact",
                                cfg=A.ExactSettings(t_final=2.0, dt=0.01, fock_cutoff=4))
    assert ei.value.details["grid_index"] == 0
    assert "grid point 0" in str(ei.value)


def test_engine_config_type_checked():
    with pytest.raises(ConfigError):
        A.sweep_excess(reference_params(), 1, [-1.0, 1.0], engine="exact", cfg=gdtwa.EnsembleConfig())
    with pytest.raises(ConfigError):
        A.sweep_molecule_number(reference_params(n_left=1, n_right=1), [1, 2])
    with pytest.raises(ConfigError):
        A.sweep_excess(reference_params(), 10, [0.2, 0.0])


def test_gdtwa_sweep_reproducible_and_seeded_per_point():
    cfg = gdtwa.EnsembleConfig(n_trajectories=64, t_final=1.0, master_seed=9)
    grid = [-0.6, 0.0, 0.6]
    a = A.sweep_excess(reference_params(), 10, grid, cfg=cfg)
    b = A.sweep_excess(reference_params(), 10, grid, cfg=cfg)
    np.testing.assert_array_equal(a.photon_ss, b.photon_ss)
    np.testing.assert_array_equal(a.uncertainty, b.uncertainty)
    assert len(set(a.seeds)) == 3
    np.testing.assert_array_equal(a.n_left, [8, 5, 2])


def test_empty_cavity_point_is_bare_value():
    p = reference_params(n_left=0)
    cfg = gdtwa.EnsembleConfig(n_trajectories=4000, t_final=6.0)
    res = A.sweep_molecule_number(p, [0], cfg=cfg)
    bare = A.bare_cavity_photons(p)
    assert bare == pytest.approx(4 * 16 / 25)
    assert abs(res.photon_ss[0] - bare) < 5 * res.photon_ss_stderr[0]
    ex = A.sweep_molecule_number(p, [0], engine="exact", cfg=A.ExactSettings(t_final=6.0, dt=0.005))
    assert ex.photon_ss[0] == pytest.approx(bare, rel=1e-3)


def test_undriven_cavity_stays_nearly_dark():
    p = reference_params(eta=0.0, n_left=0)
    ex = A.sweep_molecule_number(p, [1, 2], engine="exact", cfg=A.ExactSettings(t_final=30.0, dt=0.01))
    st_ = A.sweep_molecule_number(p, [1, 2], cfg=gdtwa.EnsembleConfig(n_trajectories=4000, t_final=30.0))
    for k in range(2):
        assert ex.photon_ss[k] < 0.05
        tol = max(5 * st_.photon_ss_stderr[k], 0.02)
        assert abs(st_.photon_ss[k] - ex.photon_ss[k]) < tol
    assert math.isfinite(st_.coherent_ss[0])
