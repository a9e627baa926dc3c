"""Polynomial-kernel machines, their HDMR glass box, and the ANOVA-kernel baseline."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb, factorial, prod

import numpy as np
from scipy import linalg

from .. import hdmr
from ..basis import BasisSpec, ProductTerm, subset_key
from ..measure import AnyMeasure

MAX_FEATURES = 100_000


class KernelError(ValueError):
    pass


class CapacityError(KernelError):
    """Explicit feature map would exceed the feature-count guard."""


def _gram_solve(k: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """``(K + lam I)^{-1} y`` with ``lam`` relative to the mean kernel diagonal."""
    lam = ridge * max(float(np.mean(np.diag(k))), 1e-300)
    return linalg.solve(k + lam * np.eye(k.shape[0]), y, assume_a="pos")


def multi_indices(n: int, degree: int) -> list:
    """All ``alpha`` in ``N^n`` with ``|alpha| <= degree``, graded."""
    out = []
    for t in range(degree + 1):
        for combo in combinations_with_replacement(range(n), t):
            a = [0] * n
            for i in combo:
                a[i] += 1
            out.append(tuple(a))
    return out


@dataclass(frozen=True, eq=False)
class KernelMachine:
    """``f(x) = sum_j xi_j (c + gamma <x, s_j>)^d``."""

    c: float
    gamma: float
    degree: int
    support_points: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        if self.c < 0 or self.gamma < 0 or (self.c == 0 and self.gamma == 0):
            raise KernelError("kernel needs c, gamma >= 0, not both zero")
        if self.degree < 1:
            raise KernelError("kernel degree must be >= 1")
        s = np.atleast_2d(np.asarray(self.support_points, dtype=float))
        xi = np.asarray(self.xi, dtype=float).ravel()
        if s.shape[0] != xi.size:
            raise KernelError("one coefficient per support point is required")
        object.__setattr__(self, "support_points", s)
        object.__setattr__(self, "xi", xi)

    @property
    def n_vars(self) -> int:
        return self.support_points.shape[1]

    def kernel(self, x, z) -> np.ndarray:
        return (self.c + self.gamma * np.atleast_2d(x) @ np.atleast_2d(z).T) ** self.degree

    def predict(self, x) -> np.ndarray:
        return self.kernel(np.asarray(x, dtype=float), self.support_points) @ self.xi

    __call__ = predict

    def feature_weight(self, alpha) -> float:
        """``beta_alpha^2 = d! / (alpha_0! prod alpha_i!) c^alpha_0 gamma^|alpha|``."""
        t = sum(alpha)
        a0 = self.degree - t
        mult = factorial(self.degree) / (factorial(a0) * prod(factorial(a) for a in alpha))
        return mult * self.c**a0 * self.gamma**t

    def monomial_coefficients(self) -> dict:
        """``theta_alpha = beta_alpha^2 sum_j xi_j s_j^alpha``, so ``f = sum theta_alpha x^alpha``."""
        count = comb(self.n_vars + self.degree, self.degree)
        if count > MAX_FEATURES:
            raise CapacityError(
                f"{count} monomial features exceed the guard of {MAX_FEATURES}; lower the degree or the order"
            )
        s = self.support_points
        out = {}
        for a in multi_indices(self.n_vars, self.degree):
            w = self.feature_weight(a)
            if w == 0.0:
                continue
            out[a] = w * float(self.xi @ np.prod(s ** np.array(a, dtype=float), axis=1))
        return out


def train_kernel_machine(x, y, c: float = 1.0, gamma: float = 1.0, degree: int = 2, ridge: float = 1e-10) -> KernelMachine:
    """Kernel ridge regression with the polynomial kernel."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise KernelError("x and y have different numbers of rows")
    m = KernelMachine(c, gamma, degree, x, np.zeros(y.size))
    xi = _gram_solve(m.kernel(x, x), y, ridge)
    return KernelMachine(c, gamma, degree, x, xi)


def _term(alpha) -> ProductTerm:
    return ProductTerm(tuple(("pow", i, p) for i, p in enumerate(alpha) if p))


def kernel_hdmr(machine: KernelMachine, measure: AnyMeasure, order: int = None, quad_points: int = None) -> hdmr.HdmrModel:
    """HDMR of a polynomial-kernel machine through its explicit feature map.

    Monomial features are grouped by support; each group is orthogonalized
    against the groups on its subsets under ``measure`` and the machine's
    polynomial is projected onto the result. With ``order`` below the
    kernel degree the projection is a truncation, solved in least norm
    when rank deficient.
    """
    theta = machine.monomial_coefficients()
    n = machine.n_vars
    if getattr(measure, "dim", n) != n:
        raise KernelError("measure dimension differs from the machine's inputs")
    top = min(n, machine.degree)
    order = top if order is None else int(order)
    if not 0 <= order <= n:
        raise KernelError(f"order must lie in 0..{n}")
    blocks = {}
    for a in multi_indices(n, machine.degree):
        u = tuple(i for i, p in enumerate(a) if p)
        if u and len(u) <= order:
            blocks.setdefault(u, []).append(_term(a))
    alphas = list(theta)
    powers = np.array(alphas, dtype=float)
    coefs = np.array([theta[a] for a in alphas])

    def poly(x):
        x = np.atleast_2d(x)
        return np.prod(x[:, None, :] ** powers[None, :, :], axis=2) @ coefs

    pts = quad_points or max(8, machine.degree + 2)
    spec = BasisSpec("monomial", machine.degree, order, blocks=blocks)
    model = hdmr.fit(poly, measure, spec, subsets=sorted(blocks, key=subset_key), quad_points=pts)
    meta = dict(model.metadata)
    meta.update(kernel={"c": machine.c, "gamma": machine.gamma, "degree": machine.degree}, n_features=len(theta))
    return hdmr.HdmrModel(
        model.constant,
        model.components,
        model.order,
        model.covariance,
        model.total_variance,
        model.n_vars,
        model.fitting_measure_id,
        model.variable_names,
        meta,
    )


@dataclass(frozen=True, eq=False)
class AnovaKernelMachine:
    """``f(x) = sum_j xi_j prod_i (1 + k_i(x_i, s_ji))`` with zero-mean univariate kernels.

    ``k_i(a, b) = sum_p psi_ip(a) psi_ip(b)`` where ``psi_ip`` is the
    standardized power ``(x^p - m_ip) / s_ip`` under the training marginal.
    """

    support_points: np.ndarray
    xi: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.support_points.shape[1]

    @property
    def univariate_degree(self) -> int:
        return self.means.shape[1]

    def _features(self, x: np.ndarray, i: int) -> np.ndarray:
        p = np.arange(1, self.univariate_degree + 1)
        return (x[:, i : i + 1] ** p - self.means[i]) / self.scales[i]

    def univariate_kernel(self, i: int, a, b) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        return self._features(a, i) @ self._features(b, i).T

    def kernel(self, x, z) -> np.ndarray:
        k = np.ones((np.atleast_2d(x).shape[0], np.atleast_2d(z).shape[0]))
        for i in range(self.n_vars):
            k *= 1.0 + self.univariate_kernel(i, x, z)
        return k

    def predict(self, x) -> np.ndarray:
        return self.kernel(np.asarray(x, dtype=float), self.support_points) @ self.xi

    __call__ = predict

    @property
    def constant(self) -> float:
        return float(self.xi.sum())

    def component(self, subset, x) -> np.ndarray:
        """``f_u(x) = sum_j xi_j prod_{i in u} k_i(x_i, s_ji)``; the empty subset gives the constant."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.ones((x.shape[0], self.support_points.shape[0]))
        for i in subset:
            k *= self.univariate_kernel(i, x, self.support_points)
        return k @ self.xi


def anova_kernel_machine(x, y, univariate_degree: int = 2, ridge: float = 1e-10) -> AnovaKernelMachine:
    """Ridge-fit ANOVA-kernel machine on ``(x, y)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise KernelError("x and y have different numbers of rows")
    if univariate_degree < 1:
        raise KernelError("univariate degree must be >= 1")
    p = np.arange(1, univariate_degree + 1)
    pw = x[:, :, None] ** p
    means = pw.mean(axis=0)
    scales = pw.std(axis=0)
    scales[scales == 0] = 1.0
    m = AnovaKernelMachine(x, np.zeros(y.size), means, scales)
    xi = _gram_solve(m.kernel(x, x), y, ridge)
    return AnovaKernelMachine(x, xi, means, scales)
