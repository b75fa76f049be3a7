"""Laplace exponents, the right inverse and sample paths."""
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_tree, running_tandem
from levyfluid.levy import LaplaceExponent, exponent, free_mean, sample_path, theta_J, theta_upsilon
from levyfluid.model import (
    ConstantJumps,
    ExponentialJumps,
    LevyComponentSpec,
    MixtureJumps,
    PreconditionError,
    TreeNetworkSpec,
    tandem,
)

CP = LaplaceExponent.compound_poisson(0.9, 1.0, ExponentialJumps(2.0))


def test_psi_frozen_value():
    # 0.9 - (1 - 2/3); cross-checked against simulation below
    assert CP.psi(1.0) == pytest.approx(0.5666666666666667, abs=1e-15)
    assert CP.psi(0.0) == 0.0


def test_psi_against_simulation():
    rng = np.random.default_rng(11)
    N = rng.poisson(1.0, 20000)
    tot = np.array([rng.exponential(0.5, k).sum() for k in N])
    x1 = tot - 0.9
    assert np.log(np.mean(np.exp(-x1))) == pytest.approx(CP.psi(1.0), abs=0.02)


def test_brownian_psi():
    e = LaplaceExponent(0.5, 0.5)
    assert e.psi(2.0) == pytest.approx(3.0)
    assert e.delta == np.inf
    assert e.prob_zero_max == 0.0


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        CP.psi(-0.1)
    with pytest.raises(ValueError):
        CP.phi(-1.0)


def test_phi_inverse_of_psi_example():
    assert CP.phi(CP.psi(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert CP.phi(0.0) == 0.0


def _phi_exponential_quadratic(c, lam, mu, q):
    # c b - lam b / (mu + b) = q  <=>  c b^2 + (c mu - lam - q) b - q mu = 0
    a, bb, cc = c, c * mu - lam - q, -q * mu
    return (-bb + np.sqrt(bb * bb - 4 * a * cc)) / (2 * a)


def test_phi_quadratic_root():
    e = LaplaceExponent.compound_poisson(1.0, 1.0, ExponentialJumps(2.0))
    assert e.phi(2.0 / 3.0) == pytest.approx(1.0, abs=1e-13)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.6, 3.0), st.floats(0.1, 1.0), st.floats(1.0, 4.0), st.floats(0.0, 50.0))
def test_phi_matches_quadratic_formula(c, lam, mu, q):
    if lam / mu >= c:
        return
    e = LaplaceExponent.compound_poisson(c, lam, ExponentialJumps(mu))
    assert e.phi(q) == pytest.approx(_phi_exponential_quadratic(c, lam, mu, q), rel=1e-11, abs=1e-14)


@pytest.mark.parametrize("q", np.logspace(-8, 6, 29))
def test_psi_phi_roundtrip(q):
    for e in (CP, LaplaceExponent(0.3, 0.7, [(2.0, ConstantJumps(0.1), 1.0)]),
              LaplaceExponent(1.0, 0.0, [(0.5, MixtureJumps((0.5, 0.5), (ExponentialJumps(1.0), ConstantJumps(0.5))), 1.0)])):
        assert abs(e.psi(e.phi(q)) - q) <= 1e-12 * (1 + q)


def test_derivatives_against_finite_differences():
    h = 1e-6
    for e in (CP, LaplaceExponent(0.3, 0.7, [(2.0, ConstantJumps(0.1), 1.0)])):
        fd0 = (e._psi(h) - e._psi(-h)) / (2 * h)
        assert -e.mean == pytest.approx(float(fd0), rel=1e-6)
        for q in (0.3, 1.0, 5.0):
            fd = (e.phi(q + h) - e.phi(q - h)) / (2 * h)
            assert float(e.dphi(q)) == pytest.approx(fd, rel=1e-6)


def test_nondrifting_component_rejected():
    e = LaplaceExponent.compound_poisson(0.5, 1.0, ExponentialJumps(2.0))
    with pytest.raises(PreconditionError, match="Assumption D"):
        e.phi(1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.6, 3.0), st.floats(0.1, 1.0), st.floats(1.0, 4.0))
def test_psi_increasing(c, lam, mu):
    if lam / mu >= c:
        return
    e = LaplaceExponent.compound_poisson(c, lam, ExponentialJumps(mu))
    grid = np.linspace(0, 20, 200)
    assert np.all(np.diff(e.psi(grid)) > 0)


def test_network_exponent_matches_free_mean():
    rng = np.random.default_rng(3)
    for _ in range(10):
        spec = random_tree(rng, int(rng.integers(1, 5)))
        m = free_mean(spec)
        for i in range(spec.n):
            assert exponent(spec, i).mean == pytest.approx(m[i], rel=1e-12, abs=1e-12)


def test_cumulants():
    cp = LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0), drift=0.1)
    spec = tandem([1.0, 0.5], [LevyComponentSpec.compound_poisson(0.3, ExponentialJumps(1.0)), cp], p=[0.8])
    assert float(theta_J(spec, 1, 0.0)) == 0.0
    assert float(theta_J(spec, 1, 1.0)) == pytest.approx(0.1 + 0.4 * (1 - 2 / 3))
    assert float(theta_J(spec, 1, np.inf)) == np.inf
    # Upsilon drift 0.8 * 1 - 0.5 = 0.3
    assert float(theta_upsilon(spec, 1, 1.0)) == pytest.approx(0.1 + 0.4 / 3 + 0.3)
    zero = tandem([1.0, 0.5], [LevyComponentSpec.compound_poisson(0.3, ExponentialJumps(1.0)),
                               LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0))], p=[0.5])
    # zero Upsilon drift, CP only: theta(inf) = lam
    assert float(theta_upsilon(zero, 1, np.inf)) == pytest.approx(0.4)
    grid = np.linspace(0, 10, 50)
    assert np.all(np.diff(theta_J(spec, 1, grid)) >= 0)


def test_zero_input_path_has_no_events():
    spec = tandem([1.0, 0.5], [LevyComponentSpec.zero(), LevyComponentSpec.zero()])
    p = sample_path(spec, 10.0, 1)
    assert p.times.size == 0
    np.testing.assert_array_equal(p.value(5.0), [0.0, 0.0])


@pytest.mark.parametrize("seed", range(20))
def test_poisson_count_concentration(seed):
    spec = TreeNetworkSpec([[0.0]], [2.0], (LevyComponentSpec.compound_poisson(1.0, ExponentialJumps(2.0)),))
    p = sample_path(spec, 1000.0, seed)
    assert abs(p.times.size - 1000) <= 4 * np.sqrt(1000)


def test_merged_events_sorted_and_attributed():
    spec = tandem([1.0, 1.0], [LevyComponentSpec.compound_poisson(1.0, ExponentialJumps(2.0)),
                               LevyComponentSpec.compound_poisson(2.0, ConstantJumps(0.3), drift=0.1)], p=[0.5])
    p = sample_path(spec, 100.0, 5)
    assert np.all(np.diff(p.times) > 0)
    assert set(np.unique(p.component)) == {0, 1}
    for k in range(p.times.size):
        row = p.jumps[k]
        assert np.count_nonzero(row) == 1 and row[p.component[k]] > 0
    assert np.all(p.jumps[p.component == 1, 1] == 0.3)


def test_path_is_deterministic_given_seed():
    spec = running_tandem(0.05)
    a, b = sample_path(spec, 50.0, 9), sample_path(spec, 50.0, 9)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.jumps, b.jumps)


def test_value_reconstruction():
    spec = running_tandem(0.05)
    p = sample_path(spec, 20.0, 2)
    t = 7.3
    k = np.searchsorted(p.times, t, side="right")
    expected = p.jumps[:k].sum(axis=0) + p.drift * t
    np.testing.assert_allclose(p.value(t), expected, atol=1e-12)


def test_subordinator_paths_nondecreasing():
    spec = tandem([1.0, 1.0], [LevyComponentSpec.compound_poisson(1.0, ExponentialJumps(2.0)),
                               LevyComponentSpec.deterministic(0.2)])
    p = sample_path(spec, 30.0, 4)
    grid = np.linspace(0, 30, 301)
    assert np.all(np.diff(p.value(grid)[:, 1]) >= 0)


def test_brownian_grid_path():
    spec = TreeNetworkSpec([[0.0]], [1.0], (LevyComponentSpec.brownian(1.0, drift=0.2),))
    p = sample_path(spec, 1.0, 3, delta=0.01)
    assert p.times.size == pytest.approx(100, abs=1)
    assert p.delta == 0.01


def test_path_csv_columns():
    p = sample_path(running_tandem(0.05), 5.0, 1)
    buf = io.StringIO()
    p.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "t,component,jump_size,drift_segment_rate"
