"""Monte Carlo oracle: sampler contracts, estimates and verdicts."""
import io

import numpy as np
import pytest

from conftest import running_tandem
from levyfluid import montecarlo as mc
from levyfluid.model import ExponentialJumps, LevyComponentSpec, PreconditionError, single_cp_tandem, tandem
from levyfluid.transforms import conditioned_XG, quasi_product_XG, single_cp_upstream_empty

STABLE = running_tandem(0.05)


@pytest.fixture(scope="module")
def samples():
    return mc.estimate_stationary(STABLE, 20_000, 17)


def test_unstable_rejected():
    with pytest.raises(PreconditionError):
        mc.estimate_stationary(running_tandem(0.1), 10, 1)


def test_degenerate_rejected():
    spec = tandem([1.0, 0.5], [LevyComponentSpec.deterministic(0.3), LevyComponentSpec.zero()])
    with pytest.raises(PreconditionError, match="degenerate"):
        mc.estimate_stationary(spec, 10, 1)


def test_sample_contracts(samples):
    assert samples.n_paths == 20_000 and samples.censored_fraction == 0.0
    assert np.all(samples.W >= 0)
    assert np.all((samples.B == 0) | (samples.I == 0))
    assert np.all((samples.h > 0) == (samples.xbar == 0))
    assert mc.g_ordering_violations(samples) == 0
    np.testing.assert_array_equal(samples.E, np.where(samples.W > 0, samples.Bt, 0.0))


def test_worker_and_batch_invariance():
    a = mc.estimate_stationary(STABLE, 600, 5, batch_size=256)
    b = mc.estimate_stationary(STABLE, 600, 5, batch_size=256, workers=2)
    np.testing.assert_array_equal(a.xbar, b.xbar)
    np.testing.assert_array_equal(a.h, b.h)
    # a prefix of a larger run is the same sample
    c = mc.estimate_stationary(STABLE, 256, 5, batch_size=256)
    np.testing.assert_array_equal(a.g[:256], c.g)


def test_zero_query_is_one(samples):
    est = mc.estimate_transform(samples, {"W": [0, 0], "B": [0, 0]})
    assert est.mean == 1.0 and est.se == 0.0


def test_estimate_errors(samples):
    with pytest.raises(ValueError):
        mc.estimate_mean([0.5])
    with pytest.raises(ValueError):
        mc.estimate_mean([])
    with pytest.raises(ValueError):
        mc.estimate_transform(samples, {"W": [1, 2, 3]})
    with pytest.raises(mc.CensoringError):
        mc.estimate_mean([0.1, 0.2], censored_fraction=0.01)


def test_compare_verdicts():
    est = mc.TransformEstimate(0.5, 0.01, 1000)
    assert mc.compare(0.5, est).passed
    v = mc.compare(0.55, est, "q")
    assert not v.passed and v.z == pytest.approx(5.0)
    assert not mc.compare(0.5 * 1.03, mc.TransformEstimate(0.5, 1.0, 10)).passed  # 3% gap
    assert mc.compare(0.3, mc.TransformEstimate(0.3, 0.0, 10)).z == 0.0
    assert mc.compare(0.3, mc.TransformEstimate(0.2, 0.0, 10)).z == np.inf
    assert not mc.all_pass([mc.compare(0.5, est), v])
    buf = io.StringIO()
    mc.write_report(buf, [v])
    head, row = buf.getvalue().splitlines()
    assert head == "query,analytic,mc_mean,mc_se,z,verdict"
    assert row.endswith("fail") and "0.55" in row


def test_quasi_product_vs_mc(samples):
    for a, b in (([0, 0], [0.5, 0.5]), ([0.3, 0.1], [0, 0]), ([0.2, 0.2], [0.4, 0.1])):
        est = mc.estimate_transform(samples, {"g": a, "xbar": b})
        assert abs(mc.compare(quasi_product_XG(STABLE, a, b), est).z) <= 3


def test_conditioned_vs_rejection(samples):
    where = samples.xbar[:, 0] == 0
    for a, b in (([0, 0], [0, 1]), ([0, 0.3], [0, 0.5])):
        est = mc.estimate_transform(samples, {"g": a, "xbar": b}, where=where)
        assert abs(mc.compare(conditioned_XG(STABLE, 0, a, b), est).z) <= 3


def test_upstream_empty_vs_mc(samples):
    ind = (samples.W[:, 0] == 0).astype(float)
    for w, b in ((0.0, 0.0), (0.5, 0.5), (1.0, 0.0)):
        est = mc.estimate_transform(samples, {"W": [0, w], "B": [0, b]}, factor=ind)
        assert abs(mc.compare(single_cp_upstream_empty(STABLE, 1, w, b), est).z) <= 3
        printed = single_cp_upstream_empty(STABLE, 1, w, b, printed_sign=True)
        assert printed < 0 < est.mean


def test_first_passage_by_hand():
    # no jumps possible before passage when the level is tiny relative to the jump rate
    spec = single_cp_tandem([1.0], 1e-9, ExponentialJumps(2.0))
    out = mc.first_passage_below(spec, 0, np.array([0.0, 0.5, 2.0]), 1)
    np.testing.assert_allclose(out, [0.0, 0.5, 2.0], rtol=1e-6)


def test_transient_from_large_start_drains():
    spec = running_tandem(0.05, r=(1.0, 0.8))
    w = mc.transient_W(spec, 1.0, 2000, 3, w0=[10.0, 10.0])
    # at most one unit of extra drain can happen in one time unit; nothing empties
    assert np.all(w[:, 0] > 8.9) and np.all(w >= 0)
