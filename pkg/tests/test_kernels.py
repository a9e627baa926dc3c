import numpy as np
import pytest

from glassbox import hdmr, sensitivity
from glassbox.basis import BasisSpec
from glassbox.blackbox import (
    CapacityError,
    KernelError,
    KernelMachine,
    anova_kernel_machine,
    kernel_hdmr,
    train_kernel_machine,
)
from glassbox.blackbox.kernels import multi_indices
from glassbox.measure import EmpiricalMeasure, ProductMeasure, Uniform

CUBE = ProductMeasure.iid(Uniform(-1, 1), 3)


@pytest.fixture(scope="module")
def machine():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (40, 3))
    return train_kernel_machine(x, x[:, 0] * x[:, 1] + x[:, 2] ** 2, degree=2, ridge=1e-8)


def test_multi_indices_count():
    idx = multi_indices(3, 2)
    assert len(idx) == 10 and idx[0] == (0, 0, 0)
    assert all(sum(a) <= 2 for a in idx)


def test_feature_weights():
    m = KernelMachine(2.0, 0.5, 3, np.zeros((1, 2)), [1.0])
    # 3!/(1! 1! 1!) c gamma^2
    assert m.feature_weight((1, 1)) == pytest.approx(6 * 2.0 * 0.25)
    assert m.feature_weight((0, 0)) == pytest.approx(8.0)


def test_monomial_expansion_reproduces_machine(machine):
    theta = machine.monomial_coefficients()
    z = np.random.default_rng(1).uniform(-1, 1, (7, 3))
    powers = np.array(list(theta), dtype=float)
    poly = np.prod(z[:, None, :] ** powers[None], axis=2) @ np.array(list(theta.values()))
    np.testing.assert_allclose(poly, machine.predict(z), atol=1e-10)


def test_kernel_decomposition_matches_exact(machine):
    m = kernel_hdmr(machine, CUBE)
    r = sensitivity.scsa(m)
    # target x1 x2 + x3^2 on the cube: variances 1/9 and 4/45
    assert r.S((2,)) == pytest.approx(4 / 9, abs=1e-6)
    assert r.S((0, 1)) == pytest.approx(5 / 9, abs=1e-6)
    z = np.random.default_rng(2).uniform(-1, 1, (5, 3))
    np.testing.assert_allclose(hdmr.evaluate(m, z), machine.predict(z), atol=1e-10)
    ref = sensitivity.scsa(hdmr.fit_recursive(machine.predict, CUBE, BasisSpec("monomial", 2, 2), quadrature_points=8))
    for u in m.subsets:
        assert r.S(u) == pytest.approx(ref.S(u), abs=1e-9)


def test_linear_kernel_gives_first_order_only(rng):
    x = rng.normal(size=(30, 3))
    km = train_kernel_machine(x, x @ [1.0, -2.0, 0.5], c=0.0, gamma=1.0, degree=1)
    m = kernel_hdmr(km, EmpiricalMeasure(x))
    assert all(len(u) == 1 for u in m.components)
    r = sensitivity.scsa(m)
    assert sum(r.S((i,)) for i in range(3)) == pytest.approx(1.0, abs=1e-8)


def test_truncation_and_dimension_checks(machine):
    m = kernel_hdmr(machine, CUBE, order=1)
    assert all(len(u) == 1 for u in m.components)
    with pytest.raises(KernelError):
        kernel_hdmr(machine, ProductMeasure.iid(Uniform(-1, 1), 2))
    with pytest.raises(KernelError):
        kernel_hdmr(machine, CUBE, order=4)


def test_capacity_guard():
    km = KernelMachine(1.0, 1.0, 6, np.zeros((1, 30)), [1.0])
    with pytest.raises(CapacityError, match="exceed"):
        km.monomial_coefficients()


def test_invalid_parameters():
    with pytest.raises(KernelError):
        KernelMachine(0.0, 0.0, 2, np.zeros((1, 2)), [1.0])
    with pytest.raises(KernelError):
        KernelMachine(1.0, 1.0, 0, np.zeros((1, 2)), [1.0])
    with pytest.raises(KernelError):
        KernelMachine(1.0, 1.0, 2, np.zeros((2, 2)), [1.0])
    with pytest.raises(KernelError):
        train_kernel_machine(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(KernelError):
        anova_kernel_machine(np.zeros((3, 2)), np.zeros(3), univariate_degree=0)


def test_anova_kernel_recovers_additive_components(rng):
    x = rng.uniform(-1, 1, (200, 2))
    y = 1.0 + x[:, 0] + x[:, 1] ** 2
    m = anova_kernel_machine(x, y, univariate_degree=2)
    np.testing.assert_allclose(m.predict(x), y, atol=1e-4)
    z = np.column_stack([np.linspace(-1, 1, 5), np.zeros(5)])
    np.testing.assert_allclose(m.component((0,), z), z[:, 0] - x[:, 0].mean(), atol=1e-3)
    np.testing.assert_allclose(m.component((0, 1), x), 0.0, atol=1e-3)
    assert m.component((), z[:1])[0] == pytest.approx(m.constant)
    assert m.constant == pytest.approx(np.mean(y), abs=1e-3)


def test_anova_kernel_constant_target(rng):
    x = rng.uniform(size=(20, 2))
    m = anova_kernel_machine(x, np.full(20, 2.0))
    np.testing.assert_allclose(m.component((1,), x), 0.0, atol=1e-6)
    assert m.constant == pytest.approx(2.0, abs=1e-6)
