import math

import numpy as np
import pytest

from crrmisc.estimator import FitConfig, choose_knots, default_knot_count, fit, initialize, nelson_aalen
from crrmisc.likelihood import Objective
from crrmisc.model import Dataset, MisclassModel
from crrmisc.predict import cumulative_hazard
from crrmisc.simulate import Scenario, analysis_model, generate_dataset
from crrmisc.splines import spline_value


@pytest.mark.parametrize("n,p,expected", [(400, 2, 4), (800, 2, 4), (2, 1, 2), (32, 2, 2), (243, 2, 3)])
def test_default_knot_count(n, p, expected):
    assert default_knot_count(n, p) == expected


def test_nelson_aalen_hand_example():
    # times 1, 2, 2, 3 with events at 1 and one of the 2s
    grid, na = nelson_aalen([1, 2, 2, 3], [1, 1, 0, 0])
    np.testing.assert_array_equal(grid, [1, 2, 3])
    np.testing.assert_allclose(na, [1 / 4, 1 / 4 + 1 / 3, 1 / 4 + 1 / 3])


def test_initialize_finite_and_unfloored(scenario1_data, analysis):
    data, _ = scenario1_data
    model, gamma = analysis
    knots = choose_knots(data, FitConfig())
    assert all(kv.n_interior == 4 for kv in knots)
    theta, notes = initialize(data, knots)
    assert notes == []
    np.testing.assert_array_equal(theta.betas, 0.0)
    obj = Objective(data, knots, model, gamma)
    assert math.isfinite(obj.value(theta.pack()))
    assert obj.floored == 0


def test_fit_converges_and_is_deterministic(scenario1_data, analysis):
    data, _ = scenario1_data
    model, gamma = analysis
    a = fit(data, FitConfig(), model, gamma)
    b = fit(data, FitConfig(), model, gamma)
    assert a.converged
    assert a.grad_norm <= 1e-5 * (1 + abs(a.loglik))
    assert a.floored_terms == 0
    np.testing.assert_array_equal(a.theta.pack(), b.theta.pack())
    assert a.loglik == b.loglik and a.iterations == b.iterations
    # fitted baselines are nondecreasing on a fine grid
    grid = np.linspace(0, data.tau, 1000)
    for j in range(2):
        assert np.all(np.diff(spline_value(a.theta.knots[j], a.theta.coefs[j], grid)) >= 0)


def test_identity_reduction(scenario1_data):
    data, _ = scenario1_data
    a = fit(data, FitConfig(), MisclassModel.identity(2))
    b = fit(data, FitConfig(), None)
    np.testing.assert_allclose(a.betas, b.betas, atol=1e-6, rtol=0)


def test_no_cause_two_events_falls_back():
    rng = np.random.default_rng(0)
    n = 80
    z = rng.normal(size=(n, 1))
    t = rng.exponential(1.0, n)
    cause = np.where(rng.uniform(size=n) < 0.8, 1, 0)
    data = Dataset(t, cause, z, 2)
    with pytest.warns(RuntimeWarning, match="cause 2 has no observed events"):
        res = fit(data, FitConfig(max_iter=50))
    assert any("cause 2" in w for w in res.warnings)
    assert np.isfinite(res.loglik)


def test_scale_handling(scenario1_data):
    data, _ = scenario1_data
    model = analysis_model()
    gamma = np.array([-2.0, -0.7, 0.8])
    tight = FitConfig(tol_grad=1e-10, tol_rel_obj=1e-14, max_iter=2000)
    base = fit(data, tight, model, gamma)
    scaled_data = Dataset(data.time, data.cause, data.z * 10, 2)
    scaled = fit(scaled_data, tight, model, gamma / [1, 1, 10], knots=base.theta.knots)
    np.testing.assert_allclose(scaled.betas * 10, base.betas, atol=1e-4)
    for j in (1, 2):
        for i in range(0, data.n, 37):
            h0 = cumulative_hazard(base, j, data.time[i], data.z[i])
            h1 = cumulative_hazard(scaled, j, data.time[i], scaled_data.z[i])
            assert h1 == pytest.approx(h0, abs=1e-6)


def test_warm_start_on_other_sieve_rejected(scenario1_data):
    data, _ = scenario1_data
    res = fit(data, FitConfig(max_iter=5))
    other = choose_knots(data, FitConfig(n_interior=2))
    with pytest.raises(ValueError):
        fit(data, FitConfig(), knots=other, init=res.theta)


def test_max_iter_returns_unconverged(scenario1_data, analysis):
    data, _ = scenario1_data
    model, gamma = analysis
    res = fit(data, FitConfig(max_iter=2), model, gamma)
    assert not res.converged
    assert res.iterations <= 2
    assert res.stop_reason == "max_iter"


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(tol_grad=0)
    with pytest.raises(ValueError):
        FitConfig(max_iter=0)
    assert FitConfig(n_interior=[2, 3]).n_interior == (2, 3)


def test_per_cause_knot_override(scenario1_data):
    data, _ = scenario1_data
    knots = choose_knots(data, FitConfig(n_interior=(1, 3)))
    assert [kv.n_interior for kv in knots] == [1, 3]
