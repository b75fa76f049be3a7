"""Free process construction and its sup / argmax / last-passage functionals."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import running_tandem
from levyfluid.fluctuation import build_X, stationary_summary, summarize_knots, summarize_path, tail_margins
from levyfluid.levy import SamplePath, sample_path
from levyfluid.model import ExponentialJumps, LevyComponentSpec, PreconditionError, TreeNetworkSpec, tandem

CP = LevyComponentSpec.compound_poisson(1.0, ExponentialJumps(2.0), drift=0.1)


def test_build_X_tandem_jump_mapping():
    spec = running_tandem(0.1)
    path = SamplePath(5.0, [1.0], [[0.7, 0.0]], [0.1, 0.0], [0])
    x = build_X(spec, path)
    np.testing.assert_allclose(x.jumps[0], [0.7, 0.7])
    np.testing.assert_allclose(x.drift, [0.1 - 1.0, 0.1 - 0.6])


def test_build_X_scaled_routing():
    spec = tandem([1.0, 0.5], [CP, LevyComponentSpec.zero()], p=[2.0])
    path = SamplePath(5.0, [1.0], [[0.7, 0.0]], [0.1, 0.0], [0])
    np.testing.assert_allclose(build_X(spec, path).jumps[0], [0.7, 1.4])


def test_build_X_single_station():
    spec = TreeNetworkSpec([[0.0]], [1.0], (CP,))
    path = sample_path(spec, 10.0, 1)
    x = build_X(spec, path)
    np.testing.assert_array_equal(x.jumps, path.jumps)
    assert x.drift[0] == pytest.approx(-0.9)


def test_pure_descent_is_censored():
    t = np.array([[0.0, 5.0]])
    x = np.array([[0.0, -5.0]])
    xbar, g, h, conv, cens = summarize_knots(t, x, -1.0)
    assert xbar[0] == 0 and g[0] == 0
    assert cens[0] and not conv[0] and h[0] == 5.0


def test_single_jump_hand_maximum():
    # X = -t + jump 2 at s = 1: max 1 attained at s, H = 0
    path = SamplePath(10.0, [1.0], [[2.0]], [-1.0], [0])
    s = summarize_path(path)
    assert s.xbar[0] == pytest.approx(1.0) and s.g[0] == 1.0 and s.h[0] == 0.0
    assert s.converged[0]


def test_tied_maximum_takes_first_epoch():
    # jump of 1 at t=0.5 reaches 0.5, back to 0 at t=1, jump 0.5 at t=1: the max 0.5 is hit twice
    path = SamplePath(10.0, [0.5, 1.0], [[1.0], [0.5]], [-1.0], [0])
    s = summarize_path(path)
    assert s.xbar[0] == pytest.approx(0.5)
    assert s.g[0] == 0.5


def test_left_limit_counts_for_argmax():
    # rising piece then a knot: the max is the left value at t=1 (slope +1), then a drop
    t = np.array([[0.0, 1.0, 1.0, 3.0]])
    x = np.array([[0.0, 1.0, 1.0, -1.0]])
    xbar, g, *_ = summarize_knots(t, x, 1.0)
    assert xbar[0] == 1.0 and g[0] == 1.0


def test_last_passage_start_by_hand():
    # X = -t, single jump 0.5 at t = 2 (never gets back above 0): sup 0 at time 0,
    # future max equals the current value until the path starts a final descent below
    # a level it will revisit; here the jump lifts X from -2 to -1.5, which the path
    # already visited at t = 1.5, so H = 1.5
    path = SamplePath(20.0, [2.0], [[0.5]], [-1.0], [0])
    s = summarize_path(path)
    assert s.xbar[0] == 0.0
    assert s.h[0] == pytest.approx(1.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_h_positive_iff_sup_zero(seed):
    spec = running_tandem(0.05)
    s = stationary_summary(spec, seed, T0=32.0)
    assert np.all(s.converged)
    assert np.all((s.h > 0) == (s.xbar == 0))
    assert np.all(s.xbar >= 0)
    # Lemma-type ordering on the tandem
    assert s.g[0] <= s.g[1]


def test_brute_force_functionals():
    rng = np.random.default_rng(4)
    for _ in range(30):
        spec = running_tandem(0.05)
        path = sample_path(spec, 80.0, rng)
        x = build_X(spec, path)
        s = summarize_path(x)
        t, v = x.knots()
        for k in range(2):
            assert s.xbar[k] == max(0.0, v[:, k].max())
            # future sup at each knot; H is the first time the path is strictly below it
            fut = np.maximum.accumulate(v[::-1, k])[::-1]
            if s.xbar[k] == 0 and not s.censored[k]:
                below = np.flatnonzero(fut[1:] > v[1:, k])
                assert s.h[k] <= t[below[0] + 1] + 1e-12


def test_unstable_network_rejected():
    with pytest.raises(PreconditionError, match="Assumption D"):
        tail_margins(running_tandem(0.1))


def test_extension_is_deterministic():
    spec = running_tandem(0.05)
    a = stationary_summary(spec, 123, T0=4.0)
    b = stationary_summary(spec, 123, T0=4.0)
    np.testing.assert_array_equal(a.xbar, b.xbar)
    assert a.horizon > 4.0


def test_brownian_root_summary():
    spec = TreeNetworkSpec([[0.0]], [1.0], (LevyComponentSpec.brownian(1.0, drift=0.5),))
    s = stationary_summary(spec, 1, T0=16.0, delta=0.01)
    assert s.converged[0] and s.xbar[0] >= 0
