import numpy as np
import pytest

from glassbox.basis import (
    BasisError,
    BasisSpec,
    OrderError,
    OrthogonalBasis,
    ProductTerm,
    ShapeError,
    as_subset,
    assemble_feature_matrix,
    build_bases,
    label,
    moment_gram,
    orthogonalize,
    power_set,
    raw_basis,
    subsets_up_to,
)
from glassbox.measure import GaussianMeasure, ProductMeasure, Uniform, quadrature


def gram(cols, emp):
    return cols.T @ (cols * emp.weights[:, None])


def test_subset_helpers():
    assert as_subset([2, 0]) == (0, 2)
    assert subsets_up_to(3, 2) == [(), (0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]
    assert power_set((0, 2)) == [(), (0,), (2,), (0, 2)]
    assert label((0, 2)) == "(1, 3)"
    assert label((1,)) == "(2,)"


def test_raw_monomial_block():
    spec = BasisSpec("monomial", 2, 2)
    assert [str(e) for e in raw_basis(spec, (0, 1))] == ["x1*x2", "x1*x2^2", "x1^2*x2", "x1^2*x2^2"]
    with pytest.raises(OrderError):
        raw_basis(BasisSpec("monomial", 2, 1), (0, 1))


def test_univariate_hermite_under_standard_gaussian():
    g = GaussianMeasure.bivariate(0.5)
    b = orthogonalize(BasisSpec("monomial", 2, 1), (0,), g)
    z = np.linspace(-2, 2, 5)
    x = np.column_stack([z, np.zeros_like(z)])
    np.testing.assert_allclose(b.evaluate(x), np.column_stack([z, (z**2 - 1) / np.sqrt(2)]), atol=1e-12)


@pytest.mark.parametrize("rho", [0.0, 0.5, -0.8])
def test_pair_element_closed_form(rho):
    # x1 x2 minus its projection on {1, x1, x2}, normalized
    g = GaussianMeasure.bivariate(rho)
    b = orthogonalize(BasisSpec("monomial", 1, 2), (0, 1), g)
    x = np.random.default_rng(0).normal(size=(20, 2))
    expect = (x[:, 0] * x[:, 1] - rho) / np.sqrt(1 + rho**2)
    np.testing.assert_allclose(b.evaluate(x)[:, 0], expect, atol=1e-12)


@pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
def test_hierarchical_orthogonality(rho):
    g = GaussianMeasure.bivariate(rho, (1.0, -0.5), (2.0, 0.5))
    spec = BasisSpec("monomial", 3, 2)
    bases = build_bases(spec, 2, g)
    q = quadrature(g, 12)
    by = {b.subset: b.evaluate(q.samples) for b in bases}
    for u, phi in by.items():
        np.testing.assert_allclose(gram(phi, q), np.eye(phi.shape[1]), atol=1e-9)
        for v, psi in by.items():
            if set(v) < set(u):
                assert np.max(np.abs(phi.T @ (psi * q.weights[:, None]))) < 1e-9
    # siblings are not orthogonal when correlated
    cross = by[(0,)].T @ (by[(1,)] * q.weights[:, None])
    assert (np.abs(cross).max() > 1e-3) == (rho != 0.0)


def test_moment_gram_agrees_with_quadrature():
    g = GaussianMeasure.bivariate(0.4, (0.3, 0.1), (1.2, 0.8))
    spec = BasisSpec("monomial", 2, 2)
    elems = [e for u in subsets_up_to(2, 2) for e in raw_basis(spec, u)]
    q = quadrature(g, 10)
    cols = np.column_stack([e.evaluate(q.samples) for e in elems])
    np.testing.assert_allclose(moment_gram(elems, g), gram(cols, q), rtol=1e-10, atol=1e-10)


def test_rank_drop_at_perfect_correlation():
    g = GaussianMeasure.bivariate(1.0)
    b = orthogonalize(BasisSpec("monomial", 2, 2), (0, 1), g)
    assert b.raw_dim == 4
    assert len(b.dropped) > 0
    assert b.dim == b.raw_dim - len(b.dropped)


def test_fourier_basis_uniform():
    p = ProductMeasure.iid(Uniform(-np.pi, np.pi), 2)
    b = orthogonalize(BasisSpec("fourier", 2, 2), (0,), p)
    assert b.dim == 4
    x = np.column_stack([np.linspace(-3, 3, 7), np.zeros(7)])
    # sin(x) normalized to unit L2 under Unif[-pi, pi]
    np.testing.assert_allclose(np.abs(b.evaluate(x)[:, 0]), np.abs(np.sqrt(2) * np.sin(x[:, 0])), atol=1e-10)


def test_fourier_rejects_gaussian():
    with pytest.raises(BasisError):
        orthogonalize(BasisSpec("fourier", 2, 1), (0,), GaussianMeasure.bivariate(0.0))


def test_spec_validation():
    with pytest.raises(BasisError):
        BasisSpec("wavelet", 1, 1)
    with pytest.raises(BasisError):
        BasisSpec("monomial", 0, 1)
    with pytest.raises(BasisError):
        BasisSpec("tree", 1, 1)


def test_shape_errors():
    g = GaussianMeasure.bivariate(0.0)
    with pytest.raises(ShapeError):
        orthogonalize(BasisSpec("monomial", 1, 1), (2,), g)
    bases = build_bases(BasisSpec("monomial", 1, 2), 2, g)
    with pytest.raises(ShapeError):
        assemble_feature_matrix(bases, np.zeros((3, 1)))
    assert assemble_feature_matrix(bases, np.zeros((3, 2))).shape == (3, 4)


def test_custom_blocks_replace_generated_elements():
    blocks = {(0,): [ProductTerm((("pow", 0, 3),))]}
    b = orthogonalize(BasisSpec("monomial", 1, 1, blocks=blocks), (0,), GaussianMeasure.bivariate(0.0))
    assert [str(e) for e in b.elements] == ["1", "x1^3"]


def test_basis_serialization_round_trip():
    g = GaussianMeasure.bivariate(0.3)
    b = orthogonalize(BasisSpec("monomial", 2, 2), (0, 1), g)
    back = OrthogonalBasis.from_dict(b.to_dict())
    x = np.random.default_rng(1).normal(size=(5, 2))
    np.testing.assert_allclose(back.evaluate(x), b.evaluate(x), atol=1e-14)


def test_product_term_powers_and_str():
    t = ProductTerm((("pow", 0, 2), ("pow", 2, 1)))
    assert t.powers(3) == (2, 0, 1)
    assert str(t) == "x1^2*x3"
    assert t.polynomial
