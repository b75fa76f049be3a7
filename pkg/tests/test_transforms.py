"""Closed-form transforms: independent oracles, limits and cross-form identities."""
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import running_tandem
from levyfluid.levy import LaplaceExponent, exponent
from levyfluid.model import (
    ConstantJumps,
    ExponentialJumps,
    LevyComponentSpec,
    PreconditionError,
    priority_network,
    single_cp_tandem,
    tandem,
)
from levyfluid.transforms import (
    busy_periods,
    conditioned_XG,
    fluctuation_identity,
    idle_probability,
    idle_vector,
    priority_corrections,
    priority_WE,
    psi_gap,
    quasi_product_XG,
    single_cp,
    single_cp_joint,
    single_cp_upstream_empty,
    tandem_WB,
    tandem_WB_via_XG,
)

E09 = LaplaceExponent.compound_poisson(0.9, 1.0, ExponentialJumps(2.0))
STABLE = running_tandem(0.05)
THREE = single_cp_tandem([1.0, 0.8, 0.65], 1.0, ExponentialJumps(2.0), drift=0.05)


def _sup_transform_exponential(c, lam, mu, beta):
    """E exp(-beta sup X) for X = CP(lam, Exp(mu)) - c t: atom 1 - rho at 0, else Exp(mu - lam/c)."""
    rho = lam / (c * mu)
    theta = mu - lam / c
    return (1 - rho) + rho * theta / (theta + beta)


def test_fluctuation_identity_frozen():
    assert fluctuation_identity(E09, 0.0, 1.0) == pytest.approx(0.7058823529411765, abs=1e-14)
    assert fluctuation_identity(E09, 0.0, 1.0) == pytest.approx(_sup_transform_exponential(0.9, 1, 2, 1.0), abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.6, 3.0), st.floats(0.1, 1.0), st.floats(1.0, 4.0), st.floats(0.0, 30.0))
def test_fluctuation_identity_exponential_oracle(c, lam, mu, beta):
    assume(lam / mu < 0.95 * c)
    e = LaplaceExponent.compound_poisson(c, lam, ExponentialJumps(mu))
    assert fluctuation_identity(e, 0.0, beta) == pytest.approx(_sup_transform_exponential(c, lam, mu, beta), rel=1e-10)


def test_fluctuation_identity_limits():
    assert fluctuation_identity(E09, 0.0, 0.0) == 1.0
    assert fluctuation_identity(E09, 0.0, np.inf) == pytest.approx(4 / 9)
    assert fluctuation_identity(E09, np.inf, 0.0) == pytest.approx(4 / 9)
    with pytest.raises(ValueError):
        fluctuation_identity(E09, -1.0, 0.0)


def test_fluctuation_identity_removable_singularity():
    a = 0.7
    b = E09.phi(a)
    at = fluctuation_identity(E09, a, b)
    near = fluctuation_identity(E09, a, b + 1e-6)
    assert at == pytest.approx(near, rel=1e-5)


def test_busy_periods():
    joint, V = busy_periods(E09, 1.0, 1.0)
    assert joint == pytest.approx(V, rel=1e-12)
    joint2, _ = busy_periods(E09, 1.0, 1.0 + 1e-6)
    assert joint2 == pytest.approx(V, rel=1e-5)
    assert busy_periods(E09, 0.0, 0.0)[1] == pytest.approx(1.0, rel=1e-12)
    # V transform against central differences of Phi
    h = 1e-6
    assert V == pytest.approx(0.4 * (E09.phi(1 + h) - E09.phi(1 - h)) / (2 * h), rel=1e-6)


def test_quasi_product_trivial_cases():
    assert quasi_product_XG(STABLE, [0, 0], [0, 0]) == pytest.approx(1.0)
    one = single_cp_tandem([1.0], 1.0, ExponentialJumps(2.0), drift=0.1)
    assert quasi_product_XG(one, [0.3], [0.7]) == pytest.approx(fluctuation_identity(E09, 0.3, 0.7), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0, 1, 2]), st.floats(0, 3), st.floats(0, 3))
def test_quasi_product_marginals(j, a, b):
    alpha, beta = np.zeros(3), np.zeros(3)
    alpha[j], beta[j] = a, b
    marg = fluctuation_identity(exponent(THREE, j), a, b)
    assert quasi_product_XG(THREE, alpha, beta) == pytest.approx(marg, rel=1e-10, abs=1e-14)


def test_conditioned_trivial_cases():
    assert conditioned_XG(STABLE, 1, [0.4, 0.2], [0.3, 0.9]) == 1.0
    assert conditioned_XG(THREE, 0, [0, 0, 0], [0, 0, 0]) == pytest.approx(1.0)


def test_tandem_wb_single_station_and_zero():
    one = single_cp_tandem([1.0], 1.0, ExponentialJumps(2.0), drift=0.1)
    e = exponent(one, 0)
    for w, b in ((0.5, 0.2), (1.0, 0.0), (0.0, 1.3)):
        expected = -e.mean * (e.phi(b) - w) / (b - e.psi(w))
        assert tandem_WB(one, [w], [b]) == pytest.approx(expected, rel=1e-12)
    assert tandem_WB(STABLE, [0, 0], [0, 0]) == 1.0


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(0, 4), min_size=6, max_size=6))
def test_tandem_wb_forms_agree(v):
    om, be = np.array(v[:3]), np.array(v[3:])
    first = tandem_WB(THREE, om, be, form="first", crosscheck=False)
    second = tandem_WB(THREE, om, be, form="second", crosscheck=False)
    assert abs(first - second) <= 1e-10
    assert abs(first - tandem_WB_via_XG(THREE, om, be)) <= 1e-10


def test_tandem_wb_general_tandem_forms_agree():
    inputs = [LevyComponentSpec.compound_poisson(0.5, ExponentialJumps(2.0), drift=0.05),
              LevyComponentSpec.compound_poisson(0.3, ConstantJumps(0.4), drift=0.02),
              LevyComponentSpec.deterministic(0.03)]
    spec = tandem([1.0, 0.9, 0.95], inputs, p=[1.2, 1.1])
    rng = np.random.default_rng(0)
    for _ in range(50):
        om, be = rng.uniform(0, 3, 3), rng.uniform(0, 3, 3)
        a = tandem_WB(spec, om, be, form="first", crosscheck=False)
        b = tandem_WB(spec, om, be, form="second", crosscheck=False)
        assert abs(a - b) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 3), min_size=6, max_size=6), st.integers(0, 5), st.floats(0.01, 1.0))
def test_transforms_in_unit_interval_and_monotone(v, idx, bump):
    om, be = np.array(v[:3]), np.array(v[3:])
    val = tandem_WB(THREE, om, be)
    assert 0 < val <= 1 + 1e-12
    om2, be2 = om.copy(), be.copy()
    (om2 if idx < 3 else be2)[idx % 3] += bump
    assert tandem_WB(THREE, om2, be2) <= val + 1e-12
    assert 0 < quasi_product_XG(THREE, be, om) <= 1 + 1e-12


@pytest.mark.parametrize("omega", [0.0, 0.3, 1.0, 5.0])
def test_shared_jump_simplification(omega):
    for j in range(3):
        for k in range(3):
            assert abs(psi_gap(THREE, j, k, omega)) <= 1e-12


def test_idle_probability_values():
    one = single_cp_tandem([1.0], 1.0, ExponentialJumps(2.0), drift=0.1)
    assert idle_probability(one, 0) == pytest.approx(4 / 9)
    assert idle_probability(STABLE, 1) == pytest.approx(0.05 / 0.55)
    assert idle_probability(STABLE, 0) == pytest.approx(fluctuation_identity(exponent(STABLE, 0), 0, np.inf))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0, 1, 2]), st.floats(0, 3), st.floats(0, 3))
def test_single_cp_matches_theorem_specialisation(i, w, b):
    om, be = np.zeros(3), np.zeros(3)
    om[i], be[i] = w, b
    assert abs(single_cp_joint(THREE, i, w, b) - tandem_WB(THREE, om, be)) <= 1e-10


def test_single_cp_part_ii():
    assert single_cp_upstream_empty(THREE, 1, 0, 0) == pytest.approx(idle_probability(THREE, 0))
    assert single_cp_upstream_empty(THREE, 2, 0, 0) == pytest.approx(idle_probability(THREE, 1))
    v = single_cp_upstream_empty(THREE, 1, 0.5, 0.5)
    assert 0 < v < single_cp_joint(THREE, 1, 0.5, 0.5)
    assert single_cp_upstream_empty(THREE, 1, 0.5, 0.5, printed_sign=True) == pytest.approx(-v)
    with pytest.raises(ValueError):
        single_cp_upstream_empty(THREE, 0, 0.5, 0.5)
    joint, p0, up = single_cp(THREE, 0, 0.0, 0.0, part_ii=False)
    assert joint == 1.0 and up is None


def test_single_cp_needs_capability():
    with pytest.raises(PreconditionError):
        single_cp(running_tandem(0.1), 1, 0.5, 0.5)
    inputs = [LevyComponentSpec.compound_poisson(0.5, ExponentialJumps(2.0)), LevyComponentSpec.deterministic(0.01)]
    with pytest.raises(PreconditionError):
        idle_probability(tandem([1.0, 0.5], inputs), 1)


def test_idle_vector_limits():
    assert idle_vector(THREE, [0, 0, 0]) == 1.0
    lam = 1.0
    for k in range(3):
        for g in (0.5, 2.0):
            gamma = np.zeros(3)
            gamma[k] = g
            expected = 1 - idle_probability(THREE, k) * g / (lam + g)
            assert idle_vector(THREE, gamma) == pytest.approx(expected, rel=1e-12)


def test_idle_vector_in_unit_interval():
    rng = np.random.default_rng(1)
    for _ in range(40):
        g = rng.uniform(0, 3, 3)
        assert 0 < idle_vector(THREE, g) <= 1


PRIO = priority_network(1.0, [LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0)),
                              LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0))])


def test_priority_corrections_vanish_for_strictly_increasing_inputs():
    inc = priority_network(1.0, [LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0)),
                                 LevyComponentSpec.compound_poisson(0.4, ExponentialJumps(2.0), drift=0.05)])
    np.testing.assert_allclose(priority_corrections(inc, [0.5, 1.0], [0.3, 0.7]), 0.0, atol=1e-15)
    assert priority_WE(inc, [0.5, 1.0], [0.3, 0.7]) == tandem_WB(inc, [0.5, 1.0], [0.3, 0.7])


def test_priority_basic():
    assert priority_WE(PRIO, [0, 0], [0, 0]) == pytest.approx(1.0)
    # beta = 0: E only enters through beta, so the transform equals the tandem one
    assert priority_WE(PRIO, [1, 1], [0, 0]) == pytest.approx(tandem_WB(PRIO, [1, 1], [0, 0]))
    assert priority_WE(PRIO, [0.5, 1], [0.5, 0.5]) > tandem_WB(PRIO, [0.5, 1], [0.5, 0.5])


def test_priority_requires_common_rate():
    with pytest.raises(PreconditionError):
        priority_WE(STABLE, [1, 1], [0, 0])
