"""Input probability measures: empirical samples, parametric families and
discrete categorical laws.

Every measure answers moment queries and can be sampled. Parametric
measures can also be turned into a tensor quadrature rule, which is an
:class:`EmpiricalMeasure` with non-uniform weights that integrates
polynomials of moderate degree exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as iproduct
from typing import Sequence, Union

import numpy as np
from scipy import special

MAX_ANALYTIC_ORDER = 16


class MeasureError(ValueError):
    """Invalid measure parameters."""


class MomentUnavailable(MeasureError):
    """The requested moment has no closed form for this measure."""


class FactorizationError(MeasureError):
    """Correlation matrix cannot be factorized (not PSD)."""


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Empirical measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point cloud standing in for the input law.

    ``samples`` has one row per point and one column per variable.
    """

    samples: np.ndarray
    weights: np.ndarray = None
    variable_names: tuple = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise MeasureError("samples must be an N x n matrix with N, n >= 1")
        if not np.all(np.isfinite(x)):
            raise MeasureError("samples contain non-finite entries")
        if self.weights is None:
            w = np.full(x.shape[0], 1.0 / x.shape[0])
        else:
            w = np.array(self.weights, dtype=float).ravel()
            if w.shape[0] != x.shape[0]:
                raise MeasureError("weights length must equal number of samples")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise MeasureError("weights must be finite and non-negative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise MeasureError(f"weights sum to {w.sum()!r}, expected 1")
        names = self.variable_names
        if names is None:
            names = tuple(f"x{i + 1}" for i in range(x.shape[1]))
        names = tuple(str(v) for v in names)
        if len(names) != x.shape[1]:
            raise MeasureError("variable_names length must equal number of columns")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variable_names", names)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def identifier(self) -> str:
        return "empirical:" + _digest(self.samples, self.weights)

    def mean(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Weighted inner products ``a^T diag(w) b``."""
        return (a * self.weights[:, None]).T @ b if a.ndim == 2 else (a * self.weights) @ b

    def variance(self, values: np.ndarray) -> float:
        m = self.mean(values)
        return float(self.weights @ (values - m) ** 2)

    def bounds(self) -> np.ndarray:
        return np.column_stack([self.samples.min(axis=0), self.samples.max(axis=0)])


# ---------------------------------------------------------------------------
# Parametric measures
# ---------------------------------------------------------------------------


def _factor_correlation(corr: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square-root factor ``L`` with ``L L^T = corr``.

    Eigenvalues in ``[-tol, 0)`` are clipped to zero so perfectly
    correlated variables are handled exactly.
    """
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() < -tol:
        raise FactorizationError(
            f"correlation matrix is not positive semi-definite (min eigenvalue {vals.min():.3g})"
        )
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    mean: np.ndarray
    stdev: np.ndarray
    correlation: np.ndarray = None

    def __post_init__(self):
        mu = np.atleast_1d(np.array(self.mean, dtype=float))
        sd = np.atleast_1d(np.array(self.stdev, dtype=float))
        n = max(mu.size, sd.size)
        if mu.size == 1:
            mu = np.full(n, mu[0])
        if sd.size == 1:
            sd = np.full(n, sd[0])
        if mu.size != sd.size:
            raise MeasureError("mean and stdev lengths differ")
        if np.any(sd <= 0):
            raise MeasureError("stdev entries must be positive")
        if self.correlation is None:
            corr = np.eye(n)
        else:
            corr = np.array(self.correlation, dtype=float)
            if corr.ndim == 0:
                corr = np.full((n, n), float(corr))
                np.fill_diagonal(corr, 1.0)
        if corr.shape != (n, n):
            raise MeasureError("correlation must be n x n")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise MeasureError("correlation must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise MeasureError("correlation must have unit diagonal")
        if np.any(np.abs(corr) > 1 + 1e-12):
            raise MeasureError("correlation entries must lie in [-1, 1]")
        for a in (mu, sd, corr):
            a.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "stdev", sd)
        object.__setattr__(self, "correlation", corr)
        # raises on non-PSD
        object.__setattr__(self, "_factor", _factor_correlation(corr))

    @classmethod
    def bivariate(cls, rho: float, mean=(0.0, 0.0), stdev=(1.0, 1.0)) -> "GaussianMeasure":
        return cls(mean, stdev, np.array([[1.0, rho], [rho, 1.0]]))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        return self.correlation * np.outer(self.stdev, self.stdev)

    @property
    def identifier(self) -> str:
        return "gaussian:" + _digest(self.mean, self.stdev, self.correlation)

    def to_dict(self) -> dict:
        return {
            "type": "gaussian",
            "mean": self.mean.tolist(),
            "stdev": self.stdev.tolist(),
            "correlation": self.correlation.tolist(),
        }

    def conditional(self, given: Sequence[int], values: np.ndarray):
        """Mean rows and covariance of ``x_rest | x_given = values``.

        Returns ``(rest, cond_mean, cond_cov)`` where ``cond_mean`` has one
        row per row of ``values``.
        """
        given = list(given)
        rest = [i for i in range(self.dim) if i not in given]
        cov = self.covariance
        s_gg = cov[np.ix_(given, given)]
        s_rg = cov[np.ix_(rest, given)]
        s_rr = cov[np.ix_(rest, rest)]
        gain = s_rg @ np.linalg.pinv(s_gg, rcond=1e-12, hermitian=True)
        values = np.atleast_2d(values)
        cmean = self.mean[rest] + (values - self.mean[given]) @ gain.T
        ccov = s_rr - gain @ s_rg.T
        ccov = 0.5 * (ccov + ccov.T)
        return rest, cmean, ccov


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise MeasureError("uniform requires a < b")

    @property
    def bounded(self) -> bool:
        return True

    def moment(self, k: int) -> float:
        a, b = self.a, self.b
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def rule(self, m: int):
        z, w = np.polynomial.legendre.leggauss(m)
        return 0.5 * (self.b - self.a) * (z + 1) + self.a, w / 2.0

    def draw(self, rng, size):
        return rng.uniform(self.a, self.b, size)

    def to_dict(self):
        return {"law": "uniform", "a": self.a, "b": self.b}

    @property
    def support(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise MeasureError("beta requires a, b > 0")

    @property
    def bounded(self) -> bool:
        return True

    def moment(self, k: int) -> float:
        out = 1.0
        for r in range(k):
            out *= (self.a + r) / (self.a + self.b + r)
        return out

    def rule(self, m: int):
        # Jacobi weight (1-t)^alpha (1+t)^beta on [-1, 1] with x = (t + 1) / 2
        t, w = special.roots_jacobi(m, self.b - 1.0, self.a - 1.0)
        return 0.5 * (t + 1.0), w / w.sum()

    def draw(self, rng, size):
        return rng.beta(self.a, self.b, size)

    def to_dict(self):
        return {"law": "beta", "a": self.a, "b": self.b}

    @property
    def support(self):
        return (0.0, 1.0)


@dataclass(frozen=True)
class PointMasses:
    values: tuple
    probabilities: tuple = None

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if not v:
            raise MeasureError("point-mass list must be non-empty")
        p = self.probabilities
        p = tuple([1.0 / len(v)] * len(v)) if p is None else tuple(float(x) for x in p)
        if len(p) != len(v) or any(x < 0 for x in p) or abs(sum(p) - 1) > 1e-12:
            raise MeasureError("point-mass probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probabilities", p)

    @property
    def bounded(self) -> bool:
        return True

    def moment(self, k: int) -> float:
        return float(sum(p * v**k for v, p in zip(self.values, self.probabilities)))

    def rule(self, m: int):
        return np.array(self.values), np.array(self.probabilities)

    def draw(self, rng, size):
        cdf = np.cumsum(self.probabilities)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return np.asarray(self.values)[np.minimum(idx, len(cdf) - 1)]

    def to_dict(self):
        return {"law": "points", "values": list(self.values), "probabilities": list(self.probabilities)}

    @property
    def support(self):
        return (min(self.values), max(self.values))


Marginal = Union[Uniform, Beta, PointMasses]


def _marginal_from_dict(d: dict) -> Marginal:
    law = d["law"]
    if law == "uniform":
        return Uniform(d["a"], d["b"])
    if law == "beta":
        return Beta(d["a"], d["b"])
    if law == "points":
        return PointMasses(tuple(d["values"]), tuple(d.get("probabilities") or ()) or None)
    raise MeasureError(f"unknown marginal law {law!r}")


@dataclass(frozen=True)
class ProductMeasure:
    marginals: tuple

    def __post_init__(self):
        m = tuple(self.marginals)
        if not m:
            raise MeasureError("product measure needs at least one marginal")
        object.__setattr__(self, "marginals", m)

    @classmethod
    def iid(cls, marginal: Marginal, n: int) -> "ProductMeasure":
        return cls((marginal,) * n)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def identifier(self) -> str:
        return "product:" + hashlib.sha1(json.dumps(self.to_dict()).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"type": "product", "marginals": [m.to_dict() for m in self.marginals]}

    def bounds(self) -> np.ndarray:
        return np.array([m.support for m in self.marginals], dtype=float)


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    """Categorical law on ``{1, ..., k_n}``."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float).ravel()
        if p.size < 1:
            raise MeasureError("support_size must be positive")
        if np.any(p <= 0) or not np.all(np.isfinite(p)):
            raise MeasureError("probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise MeasureError("probabilities must sum to 1")
        p.setflags(write=False)
        cdf = np.cumsum(p)
        cdf.setflags(write=False)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def support_size(self) -> int:
        return self.probabilities.size

    @property
    def dim(self) -> int:
        return 1

    @property
    def identifier(self) -> str:
        return "discrete:" + _digest(self.probabilities)

    def to_dict(self) -> dict:
        return {"type": "discrete", "probabilities": self.probabilities.tolist()}

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Category labels in ``1..k_n`` by inverse CDF lookup."""
        u = rng.random(size) * self._cdf[-1]
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, self.support_size - 1) + 1


ParametricMeasure = Union[GaussianMeasure, ProductMeasure, DiscreteLaw]
AnyMeasure = Union[EmpiricalMeasure, GaussianMeasure, ProductMeasure, DiscreteLaw]


def power_law(k_n: int, alpha: float) -> DiscreteLaw:
    """Power law ``P(X = k) = k^-alpha / C_alpha`` on ``1..k_n``."""
    if int(k_n) != k_n or k_n < 1:
        raise MeasureError("k_n must be a positive integer")
    if not 0.0 <= alpha < 1.0:
        raise MeasureError("alpha must lie in [0, 1)")
    k = np.arange(1, int(k_n) + 1, dtype=float)
    p = k ** (-alpha)
    return DiscreteLaw(p / p.sum())


def power_law_constant(k_n: int, alpha: float) -> float:
    return float(np.sum(np.arange(1, k_n + 1, dtype=float) ** (-alpha)))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample(measure: ParametricMeasure, count: int, seed: int) -> EmpiricalMeasure:
    """Draw ``count`` iid points with equal weights."""
    if count < 1:
        raise MeasureError("count must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(measure, GaussianMeasure):
        z = rng.standard_normal((count, measure.dim))
        x = measure.mean + (z @ measure._factor.T) * measure.stdev
    elif isinstance(measure, ProductMeasure):
        x = np.column_stack([m.draw(rng, count) for m in measure.marginals])
    elif isinstance(measure, DiscreteLaw):
        x = measure.draw(rng, count).astype(float)[:, None]
    elif isinstance(measure, EmpiricalMeasure):
        idx = rng.choice(measure.size, size=count, p=measure.weights)
        return EmpiricalMeasure(measure.samples[idx], variable_names=measure.variable_names)
    else:
        raise TypeError(f"cannot sample from {type(measure).__name__}")
    return EmpiricalMeasure(x)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------


def _gaussian_moment(mean: tuple, cov: tuple, index: tuple) -> float:
    """E[prod x_i^a_i] for a Gaussian by Stein's identity.

    E[x_i g(x)] = mu_i E[g] + sum_j Sigma_ij E[d_j g].
    """

    @lru_cache(maxsize=None)
    def rec(a: tuple) -> float:
        if not any(a):
            return 1.0
        i = next(k for k, v in enumerate(a) if v)
        b = list(a)
        b[i] -= 1
        out = mean[i] * rec(tuple(b))
        for j, bj in enumerate(b):
            if bj and cov[i][j] != 0.0:
                c = list(b)
                c[j] -= 1
                out += cov[i][j] * bj * rec(tuple(c))
        return out

    return rec(tuple(index))


def moment(measure: AnyMeasure, multi_index: Sequence[int], max_order: int = MAX_ANALYTIC_ORDER) -> float:
    """``E[prod_i x_i^{a_i}]`` under ``measure``."""
    a = tuple(int(v) for v in multi_index)
    if any(v < 0 for v in a):
        raise MeasureError("multi-index entries must be non-negative")
    if len(a) != measure.dim:
        raise MeasureError(f"multi-index has {len(a)} entries, measure has {measure.dim} variables")
    if isinstance(measure, EmpiricalMeasure):
        vals = np.prod(measure.samples ** np.array(a, dtype=float), axis=1)
        return measure.mean(vals)
    if sum(a) > max_order:
        raise MomentUnavailable(
            f"total order {sum(a)} exceeds analytic cap {max_order}; use an empirical measure"
        )
    if isinstance(measure, GaussianMeasure):
        cov = measure.covariance
        return _gaussian_moment(
            tuple(measure.mean.tolist()), tuple(map(tuple, cov.tolist())), a
        )
    if isinstance(measure, ProductMeasure):
        return float(np.prod([m.moment(k) for m, k in zip(measure.marginals, a)]))
    if isinstance(measure, DiscreteLaw):
        k = np.arange(1, measure.support_size + 1, dtype=float)
        return float(measure.probabilities @ k ** a[0])
    raise TypeError(f"unsupported measure {type(measure).__name__}")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def quadrature(measure: AnyMeasure, points_per_dim: int = 10) -> EmpiricalMeasure:
    """Tensor Gauss rule for ``measure`` as a weighted point set.

    Exact for polynomials of degree ``2 * points_per_dim - 1`` in each
    variable (Gaussian and uniform/beta marginals).
    """
    m = int(points_per_dim)
    if isinstance(measure, EmpiricalMeasure):
        return measure
    if isinstance(measure, GaussianMeasure):
        z, w = np.polynomial.hermite_e.hermegauss(m)
        w = w / w.sum()
        n = measure.dim
        grid = np.array(list(iproduct(z, repeat=n)))
        wts = np.prod(np.array(list(iproduct(w, repeat=n))), axis=1)
        x = measure.mean + (grid @ measure._factor.T) * measure.stdev
    elif isinstance(measure, ProductMeasure):
        rules = [mg.rule(m) for mg in measure.marginals]
        x = np.array(list(iproduct(*[r[0] for r in rules])))
        wts = np.prod(np.array(list(iproduct(*[r[1] for r in rules]))), axis=1)
    elif isinstance(measure, DiscreteLaw):
        x = np.arange(1, measure.support_size + 1, dtype=float)[:, None]
        wts = measure.probabilities
    else:
        raise TypeError(f"unsupported measure {type(measure).__name__}")
    wts = wts / wts.sum()
    return EmpiricalMeasure(x, wts)


def domain_box(measure: AnyMeasure) -> np.ndarray:
    """Per-variable ``(lo, hi)`` bounds; raises for unbounded measures."""
    if isinstance(measure, ProductMeasure):
        return measure.bounds()
    if isinstance(measure, EmpiricalMeasure):
        return measure.bounds()
    raise MeasureError(f"{type(measure).__name__} has unbounded support")


# ---------------------------------------------------------------------------
# Serialization and ingestion
# ---------------------------------------------------------------------------


def measure_to_json(measure: ParametricMeasure) -> str:
    return json.dumps(measure.to_dict())


def measure_from_dict(d: dict) -> ParametricMeasure:
    kind = d.get("type")
    if kind == "gaussian":
        return GaussianMeasure(d["mean"], d["stdev"], d.get("correlation"))
    if kind == "product":
        return ProductMeasure(tuple(_marginal_from_dict(m) for m in d["marginals"]))
    if kind == "discrete":
        return DiscreteLaw(d["probabilities"])
    raise MeasureError(f"unknown measure type {kind!r}")


class CsvError(ValueError):
    def __init__(self, message: str, row: int = None, column: str = None):
        super().__init__(message)
        self.row = row
        self.column = column

    def __str__(self):
        where = []
        if self.row is not None:
            where.append(f"row {self.row}")
        if self.column is not None:
            where.append(f"column {self.column!r}")
        msg = super().__str__()
        return f"{', '.join(where)}: {msg}" if where else msg


def load_csv(path, response: str = None, standardize: bool = False):
    """Read a header + numeric rows CSV.

    Returns ``(EmpiricalMeasure, response_vector_or_None)``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvError("empty file", row=1) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CsvError(f"expected {len(header)} fields, got {len(row)}", row=lineno)
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise CsvError(f"non-numeric value {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise CsvError(f"non-finite value {cell!r}", row=lineno, column=name)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise CsvError("no data rows", row=2)
    data = np.array(rows)
    if standardize:
        sd = data.std(axis=0)
        sd[sd == 0] = 1.0
        data = (data - data.mean(axis=0)) / sd
    y = None
    names = list(header)
    if response is not None:
        if response not in header:
            raise CsvError(f"response column {response!r} not in header", column=response)
        j = header.index(response)
        y = data[:, j].copy()
        data = np.delete(data, j, axis=1)
        names.pop(j)
    if data.shape[1] == 0:
        raise CsvError("no predictor columns")
    return EmpiricalMeasure(data, variable_names=names), y
