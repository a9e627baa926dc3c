"""Closed-form HDMR references: Gaussian bilinear polynomial, Ishigami, product and ESP families."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, lgamma, log, log1p, sqrt

import numpy as np


class OracleError(ValueError):
    pass


class DegenerateError(OracleError):
    pass


class AnnihilatedSubspaceError(OracleError):
    pass


def _pts(x, n: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != n:
        raise OracleError(f"expected {n} coordinates, got {x.shape[1]}")
    return x


# ---------------------------------------------------------------------------
# f(x) = b0 + b1 x1 + b2 x2 + b12 x1 x2 under a bivariate Gaussian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussPolyParams:
    beta: tuple = (1.0, 1.0, 1.0, 1.0)
    mean: tuple = (0.0, 0.0)
    stdev: tuple = (1.0, 1.0)
    rho: float = 0.0

    def __post_init__(self):
        if len(self.beta) != 4 or len(self.mean) != 2 or len(self.stdev) != 2:
            raise OracleError("beta needs 4 entries; mean and stdev need 2")
        if min(self.stdev) <= 0:
            raise OracleError("standard deviations must be positive")
        if not -1 <= self.rho <= 1:
            raise OracleError("rho must lie in [-1, 1]")

    def with_rho(self, rho: float) -> "GaussPolyParams":
        return GaussPolyParams(self.beta, self.mean, self.stdev, rho)

    def with_beta(self, beta) -> "GaussPolyParams":
        return GaussPolyParams(tuple(beta), self.mean, self.stdev, self.rho)

    def measure(self):
        from .measure import GaussianMeasure

        return GaussianMeasure.bivariate(self.rho, self.mean, self.stdev)

    def _shifted(self):
        b0, b1, b2, b12 = self.beta
        m1, m2 = self.mean
        return b1 + b12 * m2, b2 + b12 * m1


def gauss_poly(params: GaussPolyParams, x) -> np.ndarray:
    x = _pts(x, 2)
    b0, b1, b2, b12 = params.beta
    return b0 + b1 * x[:, 0] + b2 * x[:, 1] + b12 * x[:, 0] * x[:, 1]


def gauss_poly_target(params: GaussPolyParams):
    return lambda x: gauss_poly(params, x)


def gauss_poly_gradient(params: GaussPolyParams) -> dict:
    """Partial derivatives keyed by multi-index: (1,0), (0,1), (1,1)."""
    b0, b1, b2, b12 = params.beta
    return {
        (1, 0): lambda x: b1 + b12 * _pts(x, 2)[:, 1],
        (0, 1): lambda x: b2 + b12 * _pts(x, 2)[:, 0],
        (1, 1): lambda x: np.full(_pts(x, 2).shape[0], float(b12)),
    }


def gauss_poly_variance(params: GaussPolyParams) -> float:
    """``Var f`` as a function of the parameters (the common denominator of the indices)."""
    s1, s2 = params.stdev
    r = params.rho
    c1, c2 = params._shifted()
    b12 = params.beta[3]
    return 2 * r * s1 * s2 * c1 * c2 + s1**2 * c1**2 + s2**2 * (c2**2 + b12**2 * (r**2 + 1) * s1**2)


def gauss_poly_variance_in_beta(params: GaussPolyParams):
    """``sigma_f^2`` as a function of ``(b1, b2, b12)``, with its gradient family."""

    def var(b):
        b = _pts(b, 3)
        return np.array([gauss_poly_variance(params.with_beta((params.beta[0], *row))) for row in b])

    s1, s2 = params.stdev
    m1, m2 = params.mean
    r = params.rho

    def parts(b):
        b = _pts(b, 3)
        b1, b2, b12 = b[:, 0], b[:, 1], b[:, 2]
        c1, c2 = b1 + b12 * m2, b2 + b12 * m1
        d1 = 2 * s1**2 * c1 + 2 * r * s1 * s2 * c2
        d2 = 2 * s2**2 * c2 + 2 * r * s1 * s2 * c1
        d12 = m2 * d1 + m1 * d2 + 2 * b12 * (r**2 + 1) * s1**2 * s2**2
        return d1, d2, d12

    grads = {
        (1, 0, 0): lambda b: parts(b)[0],
        (0, 1, 0): lambda b: parts(b)[1],
        (0, 0, 1): lambda b: parts(b)[2],
    }
    return var, grads


def gauss_poly_components(params: GaussPolyParams) -> dict:
    """``{(): f0, (0,): f1, (1,): f2, (0, 1): f12}``; functions take (N, 2) points."""
    b0, b1, b2, b12 = params.beta
    m1, m2 = params.mean
    s1, s2 = params.stdev
    r = params.rho
    c1, c2 = params._shifted()
    k = r / (r**2 + 1)
    f0 = b0 + b1 * m1 + b2 * m2 + b12 * m1 * m2 + b12 * r * s1 * s2

    def f1(x):
        z = _pts(x, 2)[:, 0] - m1
        return z * c1 + k * b12 * s2 / s1 * (z**2 - s1**2)

    def f2(x):
        z = _pts(x, 2)[:, 1] - m2
        return z * c2 + k * b12 * s1 / s2 * (z**2 - s2**2)

    def f12(x):
        x = _pts(x, 2)
        z1, z2 = x[:, 0] - m1, x[:, 1] - m2
        num = -r * s2**2 * ((r**2 - 1) * s1**2 + z1**2) + (r**2 + 1) * s1 * s2 * z1 * z2 - r * s1**2 * z2**2
        return b12 * num / ((r**2 + 1) * s1 * s2)

    return {(): f0, (0,): f1, (1,): f2, (0, 1): f12}


def gauss_poly_indices(params: GaussPolyParams) -> dict:
    """Structural/correlative indices; keys ``Sa1, Sb1, Sa2, Sb2, Sa12, Sb12`` and totals."""
    s1, s2 = params.stdev
    r = params.rho
    c1, c2 = params._shifted()
    b12 = params.beta[3]
    den = gauss_poly_variance(params)
    if abs(den) < 1e-300:
        raise DegenerateError("Var f = 0 for these parameters")
    q = (r**2 + 1) ** 2
    sa1 = s1**2 * (c1**2 + 2 * b12**2 * r**2 * s2**2 / q) / den
    sa2 = s2**2 * (c2**2 + 2 * b12**2 * r**2 * s1**2 / q) / den
    sb = r * s1 * s2 * (q * c1 * c2 + 2 * b12**2 * r**3 * s1 * s2) / (q * den)
    sa12 = b12**2 * (r**2 - 1) ** 2 * s1**2 * s2**2 / ((r**2 + 1) * den)
    out = {"Sa1": sa1, "Sb1": sb, "Sa2": sa2, "Sb2": sb, "Sa12": sa12, "Sb12": 0.0}
    out.update(S1=sa1 + sb, S2=sa2 + sb, S12=sa12, variance=den)
    return out


def gauss_poly_correlated_basis(params: GaussPolyParams) -> dict:
    """Non-orthogonal basis blocks and coefficients reproducing the components.

    The quadratic univariate element uses the zero-mean Hermite form
    ``((x - m)^2 - s^2) / (sqrt(2) s^2)``.
    """
    b0, b1, b2, b12 = params.beta
    m1, m2 = params.mean
    s1, s2 = params.stdev
    r = params.rho
    if abs(r) >= 1:
        raise AnnihilatedSubspaceError("the pair subspace is annihilated at |rho| = 1")
    c1, c2 = params._shifted()
    root = sqrt(r**2 + 4 / (r**2 + 1) - 3)

    def phi_i(i, m, s):
        def f(x):
            z = _pts(x, 2)[:, i] - m
            return np.column_stack([z / s, (z**2 - s**2) / (sqrt(2) * s**2)])

        return f

    def phi12(x):
        x = _pts(x, 2)
        z1, z2 = x[:, 0] - m1, x[:, 1] - m2
        num = -r * s2**2 * ((r**2 - 1) * s1**2 + z1**2) + (r**2 + 1) * s1 * s2 * z1 * z2 - r * s1**2 * z2**2
        return (num / ((r**2 + 1) * root * s1**2 * s2**2))[:, None]

    quad = sqrt(2) * b12 * r * s1 * s2 / (r**2 + 1)
    phi = {
        (): lambda x: np.ones((_pts(x, 2).shape[0], 1)),
        (0,): phi_i(0, m1, s1),
        (1,): phi_i(1, m2, s2),
        (0, 1): phi12,
    }
    gamma = {
        (): np.array([b0 + b1 * m1 + b2 * m2 + b12 * m1 * m2 + b12 * r * s1 * s2]),
        (0,): np.array([s1 * c1, quad]),
        (1,): np.array([s2 * c2, quad]),
        (0, 1): np.array([b12 * root * s1 * s2]),
    }
    return {"phi": phi, "gamma": gamma}


# ---------------------------------------------------------------------------
# Ishigami
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IshigamiParams:
    a: float = 7.0
    b: float = 0.1


def ishigami(params: IshigamiParams, x) -> np.ndarray:
    x = _pts(x, 3)
    return np.sin(x[:, 0]) + params.a * np.sin(x[:, 1]) ** 2 + params.b * x[:, 2] ** 4 * np.sin(x[:, 0])


def ishigami_target(params: IshigamiParams = IshigamiParams()):
    return lambda x: ishigami(params, x)


def ishigami_measure():
    from .measure import ProductMeasure, Uniform

    return ProductMeasure.iid(Uniform(-np.pi, np.pi), 3)


def ishigami_components(params: IshigamiParams) -> dict:
    """All eight components keyed by 0-based subsets; the empty subset maps to ``f0``."""
    a, b = params.a, params.b
    zero = lambda x: np.zeros(_pts(x, 3).shape[0])
    return {
        (): a / 2,
        (0,): lambda x: (1 + b * np.pi**4 / 5) * np.sin(_pts(x, 3)[:, 0]),
        (1,): lambda x: -a / 2 * np.cos(2 * _pts(x, 3)[:, 1]),
        (2,): zero,
        (0, 1): zero,
        (0, 2): lambda x: b * (_pts(x, 3)[:, 2] ** 4 - np.pi**4 / 5) * np.sin(_pts(x, 3)[:, 0]),
        (1, 2): zero,
        (0, 1, 2): zero,
    }


def _ishigami_d(params: IshigamiParams) -> float:
    a, b = params.a, params.b
    return 45 * (a**2 + 4) + 20 * np.pi**8 * b**2 + 72 * np.pi**4 * b


def ishigami_variance(params: IshigamiParams) -> float:
    return _ishigami_d(params) / 360


def ishigami_indices(params: IshigamiParams) -> dict:
    """Non-trivial indices ``S1, S2, S13`` (all other subsets vanish)."""
    a, b = params.a, params.b
    d = _ishigami_d(params)
    return {
        "S1": 36 * (np.pi**4 * b + 5) ** 2 / (5 * d),
        "S2": 45 * a**2 / d,
        "S13": 64 * np.pi**8 * b**2 / (5 * d),
    }


# ---------------------------------------------------------------------------
# Product function and elementary symmetric polynomials
# ---------------------------------------------------------------------------


def _log_binom(n: int, k: int) -> float:
    return lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)


def _log_denominator(n: int, t2: float) -> float:
    # log((1 + t2)^n - 1)
    a = n * log1p(t2)
    return a + log1p(-np.exp(-a))


def _order_share(n: int, k: int, t: float) -> float:
    if t == 0:
        raise DegenerateError("shares are undefined for a zero coefficient of variation")
    if not 1 <= k <= n:
        raise OracleError("order k must satisfy 1 <= k <= n")
    t2 = t * t
    return float(np.exp(_log_binom(n, k) + k * log(t2) - _log_denominator(n, t2)))


def product_pk(n: int, k: int, rho: float) -> float:
    """Variance share of order-``k`` components of ``prod x_i`` (coefficient of variation ``rho``)."""
    return _order_share(n, k, rho)


def product_shares(n: int, rho: float) -> np.ndarray:
    return np.array([product_pk(n, k, rho) for k in range(1, n + 1)])


def product_total_importance(n: int, rho: float) -> float:
    """``T_i = rho^2/(rho^2+1) * (rho^2+1)^n / ((rho^2+1)^n - 1)``."""
    if rho == 0:
        raise DegenerateError("rho must be non-zero")
    r2 = rho * rho
    return float(r2 / (r2 + 1) / -np.expm1(-n * log1p(r2)))


def product_variance(n: int, mean: float, stdev: float) -> float:
    return mean ** (2 * n) * ((1 + (stdev / mean) ** 2) ** n - 1)


def product_components(n: int, mean: float) -> dict:
    """``f_u = mean^(n-|u|) prod_{i in u} (x_i - mean)`` as a factory over subsets."""

    def component(u):
        u = tuple(u)
        if not u:
            return mean**n
        return lambda x: mean ** (n - len(u)) * np.prod(_pts(x, n)[:, list(u)] - mean, axis=1)

    return component


def esp_tau(mean: float, stdev: float) -> float:
    return stdev / (mean + 1)


def esp_qk(n: int, k: int, tau: float) -> float:
    """Order-``k`` share of the full elementary symmetric sum ``E_n``."""
    return _order_share(n, k, tau)


def esp_shares(n: int, tau: float) -> np.ndarray:
    return np.array([esp_qk(n, k, tau) for k in range(1, n + 1)])


def esp_coefficient(n: int, order: int, r: int, s: int, mean: float) -> float:
    """``a_rs = sum_{k <= T - s} C(n - r, k) mean^k`` for the truncated ESP ``e_T``."""
    return float(sum(comb(n - r, k) * mean**k for k in range(0, min(order - s, n - r) + 1)))


def esp_polynomial(n: int, order: int = None):
    """``e_T(x) = 1 + sum_{1 <= |u| <= T} x_u`` computed via elementary symmetric recursion."""
    order = n if order is None else order

    def f(x):
        x = _pts(x, n)
        e = np.zeros((order + 1, x.shape[0]))
        e[0] = 1.0
        for i in range(n):
            for k in range(min(i + 1, order), 0, -1):
                e[k] = e[k] + x[:, i] * e[k - 1]
        return e.sum(axis=0)

    return f


def esp_components(n: int, mean: float) -> dict:
    """Full-order components ``f_u = (1 + mean)^(n-|u|) prod_{i in u}(x_i - mean)``."""

    def component(u):
        u = tuple(u)
        if not u:
            return (1 + mean) ** n
        return lambda x: (1 + mean) ** (n - len(u)) * np.prod(_pts(x, n)[:, list(u)] - mean, axis=1)

    return component
