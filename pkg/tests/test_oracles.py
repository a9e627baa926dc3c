import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glassbox import oracles
from glassbox.comparators import finite_difference
from glassbox.measure import quadrature


def test_uncorrelated_split():
    idx = oracles.gauss_poly_indices(oracles.GaussPolyParams())
    assert idx["S1"] + idx["S2"] == pytest.approx(2 / 3, abs=1e-14)
    assert idx["S12"] == pytest.approx(1 / 3, abs=1e-14)


def test_frozen_half_correlation():
    idx = oracles.gauss_poly_indices(oracles.GaussPolyParams(rho=0.5))
    assert idx["variance"] == pytest.approx(4.25)
    assert idx["Sa1"] == pytest.approx(0.3105882352941, abs=1e-12)
    assert idx["Sb1"] == pytest.approx(0.1364705882353, abs=1e-12)
    assert idx["Sa12"] == pytest.approx(0.1058823529412, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-0.99, 0.99),
    st.tuples(*[st.floats(-2, 2)] * 3),
    st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
    st.tuples(st.floats(0.3, 2), st.floats(0.3, 2)),
)
def test_indices_sum_to_one(rho, b, mean, sd):
    p = oracles.GaussPolyParams((1.0, *b), mean, sd, rho)
    if oracles.gauss_poly_variance(p) < 1e-6:
        return
    idx = oracles.gauss_poly_indices(p)
    assert idx["S1"] + idx["S2"] + idx["S12"] == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("rho", [-0.9, 0.0, 0.5])
def test_components_are_hierarchically_orthogonal(rho):
    p = oracles.GaussPolyParams((0.5, 1.0, -2.0, 1.5), (0.5, -1.0), (1.5, 0.8), rho)
    q = quadrature(p.measure(), 8)
    c = oracles.gauss_poly_components(p)
    x, w = q.samples, q.weights
    f12 = c[(0, 1)](x)
    for k in range(3):
        assert abs(w @ (f12 * x[:, 0] ** k)) < 1e-10
        assert abs(w @ (f12 * x[:, 1] ** k)) < 1e-10
    total = c[()] + c[(0,)](x) + c[(1,)](x) + f12
    np.testing.assert_allclose(total, oracles.gauss_poly(p, x), atol=1e-10)
    fv = np.column_stack([c[u](x) for u in [(0,), (1,), (0, 1)]])
    fc = fv - w @ fv
    cov = fc.T @ (fc * w[:, None])
    idx = oracles.gauss_poly_indices(p)
    assert cov[0, 0] / idx["variance"] == pytest.approx(idx["Sa1"], abs=1e-10)
    assert (cov[0, 1] + cov[0, 2]) / idx["variance"] == pytest.approx(idx["Sb1"], abs=1e-10)


def test_correlated_basis_reproduces_components():
    p = oracles.GaussPolyParams((1.0, 0.5, 2.0, -1.0), (0.2, 0.4), (1.1, 0.7), 0.35)
    cb = oracles.gauss_poly_correlated_basis(p)
    comps = oracles.gauss_poly_components(p)
    x = np.random.default_rng(1).normal(size=(12, 2))
    for u in [(0,), (1,), (0, 1)]:
        np.testing.assert_allclose(cb["phi"][u](x) @ cb["gamma"][u], comps[u](x), atol=1e-12)
    q = quadrature(p.measure(), 8)
    phi12 = cb["phi"][(0, 1)](q.samples)[:, 0]
    assert q.weights @ phi12**2 == pytest.approx(1.0)
    with pytest.raises(oracles.AnnihilatedSubspaceError):
        oracles.gauss_poly_correlated_basis(p.with_rho(1.0))


def test_gradient_against_finite_differences():
    p = oracles.GaussPolyParams((1.0, 0.5, 2.0, -1.0))
    x = np.random.default_rng(0).normal(size=(10, 2))
    f = oracles.gauss_poly_target(p)
    for a, g in oracles.gauss_poly_gradient(p).items():
        np.testing.assert_allclose(finite_difference(f, a)(x), g(x), atol=1e-6)
    var, grads = oracles.gauss_poly_variance_in_beta(p.with_rho(0.4))
    b = np.array([[0.5, 2.0, -1.0], [1.0, 1.0, 1.0]])
    for a, g in grads.items():
        np.testing.assert_allclose(finite_difference(var, a)(b), g(b), atol=1e-6)


def test_parameter_validation():
    with pytest.raises(oracles.OracleError):
        oracles.GaussPolyParams(rho=1.5)
    with pytest.raises(oracles.OracleError):
        oracles.GaussPolyParams(stdev=(0.0, 1.0))
    with pytest.raises(oracles.DegenerateError):
        oracles.gauss_poly_indices(oracles.GaussPolyParams((1.0, 0.0, 0.0, 0.0)))


def test_ishigami_frozen():
    prm = oracles.IshigamiParams()
    idx = oracles.ishigami_indices(prm)
    assert idx["S1"] == pytest.approx(0.3139051911, abs=1e-9)
    assert idx["S2"] == pytest.approx(0.4424111448, abs=1e-9)
    assert idx["S13"] == pytest.approx(0.2436836641, abs=1e-9)
    assert sum(idx.values()) == pytest.approx(1.0)
    assert oracles.ishigami_variance(prm) == pytest.approx(13.8445879407, abs=1e-8)


def test_ishigami_components_sum():
    prm = oracles.IshigamiParams(5.0, 0.2)
    c = oracles.ishigami_components(prm)
    x = np.random.default_rng(2).uniform(-np.pi, np.pi, (30, 3))
    total = c[()] + sum(c[u](x) for u in c if u)
    np.testing.assert_allclose(total, oracles.ishigami(prm, x), atol=1e-12)


@pytest.mark.parametrize("rho", [0.25, 0.5, 1.0, 2.0, 4.0])
@pytest.mark.parametrize("n", [1, 5, 100])
def test_product_shares_sum_to_one(n, rho):
    assert oracles.product_shares(n, rho).sum() == pytest.approx(1.0, abs=1e-12)


def test_product_total_importance():
    assert oracles.product_total_importance(1000, 1.0) == pytest.approx(0.5, abs=1e-12)
    n, rho = 4, 0.7
    shares = oracles.product_shares(n, rho)
    # each order-k subset contains variable i with probability k / n
    expect = sum(shares[k - 1] * k / n for k in range(1, n + 1))
    assert oracles.product_total_importance(n, rho) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(oracles.DegenerateError):
        oracles.product_total_importance(3, 0.0)


def test_product_components_sum():
    n, mu = 4, 1.5
    comp = oracles.product_components(n, mu)
    from itertools import combinations

    x = np.random.default_rng(0).uniform(0, 3, (6, n))
    total = comp(())
    for k in range(1, n + 1):
        for u in combinations(range(n), k):
            total = total + comp(u)(x)
    np.testing.assert_allclose(total, np.prod(x, axis=1), rtol=1e-12)


def test_esp():
    from itertools import combinations

    n = 4
    x = np.random.default_rng(3).uniform(0, 2, (5, n))
    brute = 1 + sum(np.prod(x[:, list(u)], axis=1) for k in range(1, n + 1) for u in combinations(range(n), k))
    np.testing.assert_allclose(oracles.esp_polynomial(n)(x), brute, rtol=1e-12)
    comp = oracles.esp_components(n, 0.7)
    total = comp(()) + sum(comp(u)(x) for k in range(1, n + 1) for u in combinations(range(n), k))
    np.testing.assert_allclose(total, brute, rtol=1e-12)
    assert oracles.esp_shares(n, 0.3).sum() == pytest.approx(1.0)
    assert oracles.esp_tau(1.0, 0.5) == pytest.approx(0.25)
    # a_rs counts the mean-weighted completions of a degree-s term
    assert oracles.esp_coefficient(4, 2, 1, 1, 0.5) == pytest.approx(1 + 3 * 0.5)
