import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from crrmisc.model import (Dataset, DesignSpec, GammaEstimate, IdentifiabilityWarning,
                           MisclassModel, Theta, classification_matrix, identifiability_check,
                           piecewise_linear_terms)
from crrmisc.splines import KnotVector

UNI = MisclassModel.unidirectional(DesignSpec(("intercept", "t", {"kind": "covariate", "index": 0})))


def test_unidirectional_closed_form():
    P = classification_matrix(UNI, [-2.0, 0.0, 0.0], 1.7, [0.0])
    # expit(-2) = 1 / (1 + e^2)
    assert P[0, 1] == pytest.approx(0.1192029220221175, abs=1e-12)
    assert P[1, 1] == pytest.approx(0.8807970779778825, abs=1e-12)
    assert P[0, 0] == 1.0
    assert P[1, 0] == 0.0


def test_eta_off_ignores_s():
    g = [-1.0, 0.3, -0.2]
    a = classification_matrix(UNI, g, 0.4, [1.1], eta=0.0, s=1)
    b = classification_matrix(UNI, g, 0.4, [1.1], eta=0.0, s=0)
    np.testing.assert_array_equal(a, b)


def test_eta_is_log_odds_ratio():
    g = [-1.0, 0.3, -0.2]
    p1 = classification_matrix(UNI, g, 0.4, [1.1], eta=0.7, s=1)[0, 1]
    p0 = classification_matrix(UNI, g, 0.4, [1.1], eta=0.7, s=0)[0, 1]
    assert np.log(p1 / (1 - p1)) - np.log(p0 / (1 - p0)) == pytest.approx(0.7, abs=1e-12)


def test_identity_mechanism():
    m = MisclassModel.identity(3)
    for t in (0.0, 2.5):
        np.testing.assert_array_equal(classification_matrix(m, [], t, [3.0]), np.eye(3))


def test_nonfinite_predictor_raises():
    with pytest.raises(ValueError):
        classification_matrix(UNI, [np.inf, 0, 0], 1.0, [0.0])


def test_generalized_logit_three_causes():
    design = DesignSpec(("intercept",))
    m = MisclassModel(3, design, ((0, 1), (2, 1), (1, 2)))
    P = classification_matrix(m, [0.5, -1.0, 0.2], 1.0, [0.0])
    denom = 1 + np.exp(0.5) + np.exp(-1.0)
    np.testing.assert_allclose(P[:, 1], [np.exp(0.5) / denom, 1 / denom, np.exp(-1.0) / denom])
    np.testing.assert_allclose(P[:, 2], [0.0, expit(0.2), expit(-0.2)])
    np.testing.assert_allclose(P[:, 0], [1, 0, 0])


@settings(max_examples=200, deadline=None)
@given(g=st.lists(st.floats(-8, 8), min_size=3, max_size=3), t=st.floats(0, 50),
       z=st.floats(-10, 10), eta=st.floats(-3, 3), s=st.sampled_from([0, 1]))
def test_column_stochastic(g, t, z, eta, s):
    P = classification_matrix(UNI, g, t, [z], eta, s)
    np.testing.assert_allclose(P.sum(axis=0), 1.0, atol=1e-12)
    assert np.all((P >= 0) & (P <= 1))


@settings(max_examples=100, deadline=None)
@given(g=st.lists(st.floats(-5, 5), min_size=3, max_size=3), t=st.floats(0, 5),
       z=st.floats(-3, 3), bump=st.floats(0.01, 3))
def test_intercept_increases_flip_probability(g, t, z, bump):
    lo = classification_matrix(UNI, g, t, [z])[0, 1]
    hi = classification_matrix(UNI, [g[0] + bump, g[1], g[2]], t, [z])[0, 1]
    assert hi > lo or lo > 1 - 1e-12


def test_piecewise_linear_design_rows():
    terms = ["intercept", "t", *piecewise_linear_terms([3, 6, 12])]
    d = DesignSpec(tuple(terms))
    rows = d.rows([1.0, 4.0, 7.5, 20.0], np.zeros((4, 0)))
    expected = [[1, 1, 0, 0, 0], [1, 4, 1, 0, 0], [1, 7.5, 0, 1.5, 0], [1, 20, 0, 0, 8]]
    np.testing.assert_allclose(rows, expected)


def test_covariate_transforms_and_log_t():
    d = DesignSpec(("log_t", "t2", {"kind": "covariate", "index": 1, "transform": "sqrt"}))
    rows = d.rows([0.0, 2.0], np.array([[0, 9.0], [0, 16.0]]))
    np.testing.assert_allclose(rows, [[np.log(1e-12), 0, 3], [np.log(2), 4, 4]])


def _data(time, cause, z, w=None):
    return Dataset(np.asarray(time, float), np.asarray(cause), np.asarray(z, float), 2, w)


def test_identifiability_identity():
    data = _data([1, 2, 3], [1, 2, 0], [[0], [1], [2]])
    rep = identifiability_check(MisclassModel.identity(2), [], data)
    assert rep.min_diagonal == 1.0
    assert rep.warning is None


def test_identifiability_scan_matches_direct_expit(scenario1_data, analysis):
    data, _ = scenario1_data
    model, gamma = analysis
    rep = identifiability_check(model, [-1.5, -0.7, 0.8], data)
    flip = expit(-1.5 - 0.7 * data.time + 0.8 * data.z[:, 0])
    direct = np.minimum(1.0, 1.0 - flip).min()
    assert rep.min_diagonal == pytest.approx(direct, abs=1e-14)
    assert rep.fraction_violating == pytest.approx(np.mean(1 - flip <= 0.5) / 2, abs=1e-14)


def test_identifiability_warns():
    data = _data([1.0], [2], [[0.0]])
    # pi*_22 = 1 - expit(log(1.5)) = 0.4
    with pytest.warns(IdentifiabilityWarning):
        rep = identifiability_check(UNI, [np.log(1.5), 0, 0], data)
    assert rep.min_diagonal == pytest.approx(0.4)


def test_dataset_validation():
    with pytest.raises(ValueError):
        _data([1, -1], [1, 0], [[0], [0]])
    with pytest.raises(ValueError):
        _data([1, 1], [3, 0], [[0], [0]])
    with pytest.raises(ValueError):
        _data([1, 1], [1, 0], [[np.nan], [0]])
    d = _data([1, 2.5, 0.5], [1, 0, 2], [[0], [1], [2]])
    assert d.tau == 2.5
    np.testing.assert_array_equal(d.deltas, [[1, 0], [0, 0], [0, 1]])


def test_gamma_estimate_clipping():
    om = np.array([[1.0, 0.0], [0.0, -1e-12]])
    g = GammaEstimate([0.0, 1.0], om)
    assert np.linalg.eigvalsh(g.clipped_omega()).min() >= 0
    with pytest.raises(ValueError):
        GammaEstimate([0.0], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        GammaEstimate([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_theta_pack_roundtrip():
    kv = [KnotVector((0.5,), 2.0, 3), KnotVector((), 2.0, 2)]
    th = Theta(np.array([[0.1, 0.2], [0.3, 0.4]]), [np.arange(4.0), np.arange(2.0)], kv)
    x = th.pack()
    assert x.size == 2 + 4 + 2 + 2
    back = th.unpack(x)
    np.testing.assert_array_equal(back.pack(), x)
    np.testing.assert_array_equal(back.betas, th.betas)
    again = Theta.from_dict(th.to_dict())
    np.testing.assert_array_equal(again.pack(), x)
    assert again.knots == kv
