import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glassbox import hdmr, oracles, sensitivity
from glassbox.basis import BasisSpec
from glassbox.measure import EmpiricalMeasure, GaussianMeasure, ProductMeasure, Uniform, quadrature, sample

SPEC = BasisSpec("monomial", 2, 2)


def fitted(rho, **kw):
    p = oracles.GaussPolyParams(rho=rho, **kw)
    return p, hdmr.fit(oracles.gauss_poly_target(p), p.measure(), SPEC)


@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9, -0.6])
def test_fit_reproduces_closed_form_components(rho):
    p, m = fitted(rho)
    comps = oracles.gauss_poly_components(p)
    x = np.random.default_rng(0).normal(size=(50, 2))
    assert m.constant == pytest.approx(comps[()], abs=1e-10)
    for u in [(0,), (1,), (0, 1)]:
        np.testing.assert_allclose(m.components[u].evaluate(x), comps[u](x), atol=1e-9)


def test_frozen_first_component_value():
    _, m = fitted(0.5)
    # f1(x) = x + 0.4 (x^2 - 1)
    assert m.components[(0,)].evaluate(np.array([[2.0, 0.0]]))[0] == pytest.approx(3.2, abs=1e-10)


@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_indices_match_closed_form(rho):
    p, m = fitted(rho)
    rep = sensitivity.scsa(m)
    idx = oracles.gauss_poly_indices(p)
    assert rep.Sa((0,)) == pytest.approx(idx["Sa1"], abs=1e-10)
    assert rep.Sb((0,)) == pytest.approx(idx["Sb1"], abs=1e-10)
    assert rep.Sa((0, 1)) == pytest.approx(idx["Sa12"], abs=1e-10)
    assert rep.Sb((0, 1)) == pytest.approx(0.0, abs=1e-10)
    assert m.total_variance == pytest.approx(idx["variance"])


def test_nonstandard_parameters():
    p, m = fitted(0.3, beta=(0.5, -1.0, 2.0, 1.5), mean=(1.0, -0.5), stdev=(2.0, 0.5))
    comps = oracles.gauss_poly_components(p)
    x = p.measure().mean + np.random.default_rng(3).normal(size=(20, 2))
    for u in [(0,), (1,), (0, 1)]:
        np.testing.assert_allclose(m.components[u].evaluate(x), comps[u](x), atol=1e-9)


def test_covariance_matches_monte_carlo(gauss_sample):
    p = oracles.GaussPolyParams(rho=0.5)
    y = oracles.gauss_poly(p, gauss_sample.samples)
    m = hdmr.fit(y, gauss_sample, SPEC)
    np.testing.assert_allclose(hdmr.covariance_monte_carlo(m, gauss_sample), m.covariance, atol=1e-10)
    assert m.covariance.sum() == pytest.approx(m.total_variance, rel=1e-10)


def test_hierarchical_orthogonality_on_sample(gauss_sample):
    y = np.sin(gauss_sample.samples[:, 0]) * gauss_sample.samples[:, 1] ** 2
    m = hdmr.fit(y, gauss_sample, BasisSpec("monomial", 3, 2))
    x, w = gauss_sample.samples, gauss_sample.weights
    f12 = m.components[(0, 1)].evaluate(x)
    for k in range(4):
        assert abs(w @ (f12 * x[:, 0] ** k)) < 1e-10
        assert abs(w @ (f12 * x[:, 1] ** k)) < 1e-10
    for u in [(0,), (1,)]:
        assert abs(w @ m.components[u].evaluate(x)) < 1e-10


def test_perfect_correlation_min_norm():
    p = oracles.GaussPolyParams(rho=-1.0)
    with pytest.warns(RuntimeWarning, match="minimum-norm"):
        m = hdmr.fit(oracles.gauss_poly_target(p), p.measure(), SPEC)
    assert m.metadata["min_norm_fallback"]
    rep = sensitivity.scsa(m)
    assert sum(rep.S(u) for u in m.subsets) == pytest.approx(1.0, abs=1e-10)
    assert rep.S((0,)) + rep.S((1,)) == pytest.approx(1.0, abs=1e-10)


def test_ridge_leaves_constant_unpenalized(gauss_sample):
    y = np.full(gauss_sample.size, 3.0) + 1e-3 * gauss_sample.samples[:, 0]
    m = hdmr.fit(y, gauss_sample, SPEC, ridge=10.0)
    assert m.constant == pytest.approx(3.0, abs=1e-4)
    m0 = hdmr.fit(y, gauss_sample, SPEC)
    assert abs(m.components[(0,)].coefficients[0]) < abs(m0.components[(0,)].coefficients[0])


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linear_superposition(a, b):
    g = GaussianMeasure.bivariate(0.4)
    f = lambda x: x[:, 0] * x[:, 1] ** 2
    h = lambda x: np.cos(x[:, 0]) + x[:, 1]
    mf, mh = hdmr.fit(f, g, SPEC), hdmr.fit(h, g, SPEC)
    mc = hdmr.fit(lambda x: a * f(x) + b * h(x), g, SPEC)
    x = np.random.default_rng(0).normal(size=(10, 2))
    for u in mc.subsets:
        lhs = mc.components[u].evaluate(x)
        rhs = a * mf.components[u].evaluate(x) + b * mh.components[u].evaluate(x)
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_scale_model():
    _, m = fitted(0.5)
    s = hdmr.scale_model(m, -2.0)
    x = np.array([[0.3, -1.2]])
    assert hdmr.evaluate(s, x)[0] == pytest.approx(-2 * hdmr.evaluate(m, x)[0])
    np.testing.assert_allclose(s.covariance, 4 * m.covariance)


def test_evaluate_truncation_and_errors():
    p, m = fitted(0.5)
    x = np.array([[1.0, 2.0]])
    assert hdmr.evaluate(m, x[0]) == pytest.approx(oracles.gauss_poly(p, x)[0])
    first = hdmr.evaluate(m, x, max_order=1)[0]
    assert first == pytest.approx(oracles.gauss_poly(p, x)[0] - m.components[(0, 1)].evaluate(x)[0])
    with pytest.raises(hdmr.HdmrError):
        hdmr.evaluate(m, x, max_order=3)
    with pytest.raises(hdmr.ShapeError):
        hdmr.evaluate(m, np.zeros((1, 3)))
    assert m.evaluate_component((0, 1), x)[0] == pytest.approx(m.components[(0, 1)].evaluate(x)[0])


def test_target_validation(gauss_sample):
    with pytest.raises(hdmr.ShapeError):
        hdmr.fit(np.zeros(3), gauss_sample, SPEC)
    with pytest.raises(hdmr.HdmrError):
        hdmr.fit(np.zeros(10), GaussianMeasure.bivariate(0.0), SPEC)
    with pytest.raises(hdmr.HdmrError):
        hdmr.fit(lambda x: x[:, 0], GaussianMeasure.bivariate(0.0), BasisSpec("monomial", 1, 3))


def test_json_round_trip():
    _, m = fitted(0.5)
    back = hdmr.HdmrModel.from_json(m.to_json())
    x = np.random.default_rng(2).normal(size=(8, 2))
    np.testing.assert_allclose(hdmr.evaluate(back, x), hdmr.evaluate(m, x), atol=1e-13)
    np.testing.assert_allclose(back.covariance, m.covariance)
    assert back.fitting_measure_id == m.fitting_measure_id


def test_json_version_checked():
    _, m = fitted(0.0)
    d = m.to_dict()
    d.pop("version")
    with pytest.raises(hdmr.SerializationError):
        hdmr.HdmrModel.from_dict(d)
    d["version"] = 99
    with pytest.raises(hdmr.SerializationError):
        hdmr.HdmrModel.from_dict(d)


def test_constant_target_has_zero_variance(gauss_sample):
    m = hdmr.fit(np.ones(gauss_sample.size), gauss_sample, SPEC)
    assert m.total_variance == 0.0
    with pytest.raises(sensitivity.DegenerateModelError):
        sensitivity.scsa(m)


def test_recursive_matches_ishigami_components():
    prm = oracles.IshigamiParams()
    m = hdmr.fit_recursive(oracles.ishigami_target(prm), oracles.ishigami_measure(), BasisSpec("monomial", 1, 3), 32)
    comps = oracles.ishigami_components(prm)
    x = np.random.default_rng(0).uniform(-np.pi, np.pi, (20, 3))
    assert m.constant == pytest.approx(comps[()], abs=1e-10)
    for u in [(0,), (1,), (2,), (0, 2), (1, 2)]:
        np.testing.assert_allclose(m.components[u].evaluate(x), comps[u](x), atol=1e-8)
    assert m.total_variance == pytest.approx(oracles.ishigami_variance(prm), rel=1e-10)
    idx = oracles.ishigami_indices(prm)
    rep = sensitivity.scsa(m)
    assert rep.S((0, 2)) == pytest.approx(idx["S13"], abs=1e-10)


def test_recursive_equals_projection_on_product_measure():
    meas = ProductMeasure((Uniform(0, 2), Uniform(-1, 1), Uniform(0.5, 1.5)))
    f = lambda x: x[:, 0] ** 2 * x[:, 1] + x[:, 2] * x[:, 0] - x[:, 1] ** 2 * x[:, 2] ** 2
    spec = BasisSpec("monomial", 2, 3)
    a = hdmr.fit(f, meas, spec)
    b = hdmr.fit_recursive(f, meas, spec, 8)
    x = np.random.default_rng(4).uniform(0.5, 1, (10, 3))
    for u in a.subsets:
        np.testing.assert_allclose(a.components[u].evaluate(x), b.components[u].evaluate(x), atol=1e-10)
    np.testing.assert_allclose(a.covariance, b.covariance, atol=1e-10)


def test_recursive_requires_product_measure():
    with pytest.raises(hdmr.PreconditionError):
        hdmr.fit_recursive(lambda x: x[:, 0], GaussianMeasure.bivariate(0.0), BasisSpec("monomial", 1, 1))


def test_fourier_fit_on_uniform():
    meas = ProductMeasure.iid(Uniform(-np.pi, np.pi), 2)
    f = lambda x: np.sin(x[:, 0]) + 0.5 * np.cos(2 * x[:, 1]) * np.sin(x[:, 0])
    m = hdmr.fit(f, meas, BasisSpec("fourier", 2, 2))
    x = np.random.default_rng(1).uniform(-3, 3, (10, 2))
    np.testing.assert_allclose(hdmr.evaluate(m, x), f(x), atol=1e-10)
    np.testing.assert_allclose(m.components[(0,)].evaluate(x), np.sin(x[:, 0]), atol=1e-10)
