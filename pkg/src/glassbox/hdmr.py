"""HDMR fitting: projection of a target onto hierarchically-orthogonal subspaces."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy import linalg

from .basis import (
    BasisSpec,
    OrthogonalBasis,
    ShapeError,
    as_subset,
    assemble_feature_matrix,
    build_bases,
    construction_measure,
    subset_key,
    subsets_up_to,
)
from .measure import AnyMeasure, EmpiricalMeasure, ProductMeasure

MODEL_VERSION = 1


class HdmrError(ValueError):
    pass


class PreconditionError(HdmrError):
    pass


class SerializationError(HdmrError):
    pass


@dataclass(frozen=True, eq=False)
class ComponentFunction:
    """``f_u(x_u) = <coefficients, basis(x_u)>``."""

    subset: tuple
    coefficients: np.ndarray
    basis: OrthogonalBasis

    def evaluate(self, x, cache=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.basis.dim == 0:
            return np.zeros(x.shape[0])
        return self.basis.evaluate(x, cache) @ self.coefficients

    def scaled(self, c: float) -> "ComponentFunction":
        return ComponentFunction(self.subset, self.coefficients * c, self.basis)


@dataclass(frozen=True, eq=False)
class HdmrModel:
    constant: float
    components: Mapping
    order: int
    covariance: np.ndarray
    total_variance: float
    n_vars: int
    fitting_measure_id: str = ""
    variable_names: tuple = None
    metadata: dict = field(default_factory=dict)

    @property
    def subsets(self) -> list:
        """Non-empty component subsets in graded order (covariance row order)."""
        return sorted(self.components, key=subset_key)

    def component(self, u) -> object:
        return self.components[as_subset(u)]

    def evaluate_component(self, u, x) -> np.ndarray:
        """Values of ``f_u``; subsets without a component evaluate to zero."""
        x = _check_points(x, self.n_vars)
        c = self.components.get(as_subset(u))
        return np.zeros(x.shape[0]) if c is None else c.evaluate(x)

    def evaluate_components(self, x, cache=None) -> np.ndarray:
        x = _check_points(x, self.n_vars)
        if cache is None:
            cache = {}
        if not self.subsets:
            return np.zeros((x.shape[0], 0))
        return np.column_stack([self.components[u].evaluate(x, cache) for u in self.subsets])

    def to_dict(self) -> dict:
        blocks = []
        for u in self.subsets:
            c = self.components[u]
            if not isinstance(c, ComponentFunction):
                raise SerializationError(f"component {u} is not a basis expansion and cannot be serialized")
            d = c.basis.to_dict()
            d["coefficients"] = np.asarray(c.coefficients).tolist()
            blocks.append(d)
        return {
            "version": MODEL_VERSION,
            "constant": self.constant,
            "order": self.order,
            "n_vars": self.n_vars,
            "variable_names": list(self.variable_names) if self.variable_names else None,
            "blocks": blocks,
            "covariance": np.asarray(self.covariance).tolist(),
            "total_variance": self.total_variance,
            "fitting_measure_id": self.fitting_measure_id,
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "HdmrModel":
        if "version" not in d:
            raise SerializationError("model document lacks a version field")
        if d["version"] != MODEL_VERSION:
            raise SerializationError(f"unsupported model version {d['version']!r}")
        comps = {}
        for b in d["blocks"]:
            basis = OrthogonalBasis.from_dict(b)
            comps[basis.subset] = ComponentFunction(basis.subset, np.array(b["coefficients"], dtype=float), basis)
        k = len(comps)
        return cls(
            float(d["constant"]),
            comps,
            int(d["order"]),
            np.array(d["covariance"], dtype=float).reshape(k, k),
            float(d["total_variance"]),
            int(d["n_vars"]),
            d.get("fitting_measure_id", ""),
            tuple(d["variable_names"]) if d.get("variable_names") else None,
            d.get("metadata", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "HdmrModel":
        return cls.from_dict(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _check_points(x, n) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n:
        raise ShapeError(f"expected points with {n} coordinates, got shape {x.shape}")
    return x


def _target_values(target, emp: EmpiricalMeasure, analytic: bool) -> np.ndarray:
    if callable(target):
        y = np.asarray(target(emp.samples), dtype=float).ravel()
    else:
        if analytic:
            raise HdmrError("an analytic measure needs a callable target")
        y = np.asarray(target, dtype=float).ravel()
    if y.shape[0] != emp.size:
        raise ShapeError(f"response has {y.shape[0]} entries, measure has {emp.size} points")
    if not np.all(np.isfinite(y)):
        raise HdmrError("target values must be finite")
    return y


def solve_weighted(phi: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float = 0.0, penalize=None):
    """Weighted (ridge) least squares; returns ``(coef, rank_deficient)``.

    With ``ridge == 0`` a rank-deficient design gets the minimum-norm
    solution from an SVD-based solver.
    """
    sw = np.sqrt(w)
    a = phi * sw[:, None]
    b = y * sw
    if ridge > 0:
        if penalize is None:
            penalize = np.ones(phi.shape[1], dtype=bool)
        pen = np.diag(np.sqrt(ridge) * penalize.astype(float))[penalize]
        a = np.vstack([a, pen])
        b = np.concatenate([b, np.zeros(pen.shape[0])])
    coef, _, rank, sv = linalg.lstsq(a, b, cond=1e-12, lapack_driver="gelsd")
    return coef, rank < a.shape[1]


def _covariance_from_gram(gram: np.ndarray, coefs: list, sizes: list) -> np.ndarray:
    k = len(coefs)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    c = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            blk = gram[offs[i]:offs[i + 1], offs[j]:offs[j + 1]]
            c[i, j] = c[j, i] = coefs[i] @ blk @ coefs[j] if blk.size else 0.0
    return c


def fit(
    target: Union[Callable, np.ndarray],
    measure: AnyMeasure,
    spec: BasisSpec,
    ridge: float = 0.0,
    subsets: Sequence = None,
    quad_points: int = None,
) -> HdmrModel:
    """Solve the HDMR variational problem on ``measure``.

    All subspace blocks are fitted jointly by one weighted least-squares
    solve, which is what yields hierarchical (rather than mutual)
    orthogonality under correlated inputs. Analytic measures are replaced
    by an exact tensor Gauss rule.
    """
    if ridge < 0:
        raise HdmrError("ridge must be non-negative")
    analytic = not isinstance(measure, EmpiricalMeasure)
    spec = spec.with_domain(measure)
    emp = construction_measure(measure, spec, quad_points)
    n = emp.dim
    if spec.max_order > n:
        raise HdmrError(f"max_order {spec.max_order} exceeds number of variables {n}")
    y = _target_values(target, emp, analytic)

    bases = build_bases(spec, n, emp, subsets)
    cache = {}
    phi = assemble_feature_matrix(bases, emp.samples, cache)
    penalize = np.ones(phi.shape[1], dtype=bool)
    penalize[0] = False
    coef, deficient = solve_weighted(phi, y, emp.weights, ridge, penalize)
    fallback = bool(deficient and ridge == 0)
    if fallback:
        warnings.warn("singular normal system; using the minimum-norm solution", RuntimeWarning, stacklevel=2)

    sizes = [b.dim for b in bases]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    constant = float(coef[0])
    comps = {}
    coefs = []
    for b, lo, hi in zip(bases[1:], offs[1:-1], offs[2:]):
        comps[b.subset] = ComponentFunction(b.subset, coef[lo:hi].copy(), b)
        coefs.append(coef[lo:hi])

    wphi = phi * emp.weights[:, None]
    gram = phi.T @ wphi
    cov = _covariance_from_gram(gram[1:, 1:], coefs, sizes[1:])
    resid = y - phi @ coef
    meta = {
        "min_norm_fallback": fallback,
        "ridge": ridge,
        "family": spec.family,
        "degree": spec.degree,
        "dropped": {str(list(b.subset)): len(b.dropped) for b in bases if b.dropped},
        "residual_inner_max": float(np.max(np.abs(wphi.T @ resid))) if phi.size else 0.0,
        "analytic_measure": analytic,
    }
    names = getattr(measure, "variable_names", None)
    return HdmrModel(
        constant,
        comps,
        spec.max_order,
        cov,
        emp.variance(y) if np.ptp(y) > 0 else 0.0,
        n,
        getattr(measure, "identifier", ""),
        names,
        meta,
    )


def evaluate(model: HdmrModel, point, max_order: int = None) -> np.ndarray:
    """Reduced-order prediction ``f0 + sum_{|u| <= max_order} f_u``."""
    if max_order is None:
        max_order = model.order
    if max_order > model.order:
        raise HdmrError(f"max_order {max_order} exceeds model order {model.order}")
    scalar = np.asarray(point).ndim == 1
    x = _check_points(point, model.n_vars)
    out = np.full(x.shape[0], model.constant)
    cache = {}
    for u in model.subsets:
        if len(u) <= max_order:
            out = out + model.components[u].evaluate(x, cache)
    return float(out[0]) if scalar else out


def variance_decomposition(model: HdmrModel) -> dict:
    """``{(u, v): Cov(f_u, f_v)}`` over all component pairs."""
    subs = model.subsets
    return {(u, v): float(model.covariance[i, j]) for i, u in enumerate(subs) for j, v in enumerate(subs)}


def covariance_monte_carlo(model: HdmrModel, measure: EmpiricalMeasure) -> np.ndarray:
    """Weighted covariance of component evaluations on ``measure``."""
    f = model.evaluate_components(measure.samples)
    fc = f - measure.weights @ f
    return fc.T @ (fc * measure.weights[:, None])


def scale_model(model: HdmrModel, c: float) -> HdmrModel:
    comps = {u: comp.scaled(c) for u, comp in model.components.items()}
    return HdmrModel(
        model.constant * c,
        comps,
        model.order,
        model.covariance * c * c,
        model.total_variance * c * c,
        model.n_vars,
        model.fitting_measure_id,
        model.variable_names,
        dict(model.metadata),
    )


# ---------------------------------------------------------------------------
# Recursive construction for product measures
# ---------------------------------------------------------------------------


class QuadratureComponent:
    """Component defined by conditional means, ``M^u f - sum of lower terms``.

    Values on the tensor quadrature nodes are tabulated; evaluation at
    arbitrary points integrates the predictor over ``x_{-u}`` afresh.
    """

    def __init__(self, subset, table, lower, constant, predictor, nodes, weights, n):
        self.subset = subset
        self.table = table
        self.lower = lower
        self.constant = constant
        self.predictor = predictor
        self.nodes = nodes
        self.weights = weights
        self.n = n

    def conditional_mean(self, x: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
        u = list(self.subset)
        rest = [i for i in range(self.n) if i not in u]
        if not rest:
            return np.asarray(self.predictor(x), dtype=float)
        grid = np.array(np.meshgrid(*[self.nodes[i] for i in rest], indexing="ij")).reshape(len(rest), -1).T
        wts = np.ones(1)
        for i in rest:
            wts = np.outer(wts, self.weights[i]).ravel()
        g = grid.shape[0]
        out = np.empty(x.shape[0])
        step = max(1, chunk // g)
        for s in range(0, x.shape[0], step):
            xs = x[s:s + step]
            pts = np.empty((xs.shape[0] * g, self.n))
            pts[:, u] = np.repeat(xs[:, u], g, axis=0)
            pts[:, rest] = np.tile(grid, (xs.shape[0], 1))
            vals = np.asarray(self.predictor(pts), dtype=float).reshape(xs.shape[0], g)
            out[s:s + step] = vals @ wts
        return out

    def evaluate(self, x, cache=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = self.conditional_mean(x) - self.constant
        for comp in self.lower:
            out = out - comp.evaluate(x)
        return out


def _contract(values: np.ndarray, axes_keep: tuple, weights: list, all_axes: tuple) -> np.ndarray:
    """Integrate ``values`` (axes ``all_axes``) over the axes not in ``axes_keep``."""
    out = values
    for pos in reversed(range(len(all_axes))):
        ax = all_axes[pos]
        if ax not in axes_keep:
            out = np.tensordot(out, weights[ax], axes=([pos], [0]))
    return out


def fit_recursive(predictor: Callable, measure: ProductMeasure, spec: BasisSpec, quadrature_points: int = 64) -> HdmrModel:
    """Recursive construction ``f_u = M^u f - sum_{w < u} f_w``.

    Exact only for independent inputs, so anything but a
    :class:`ProductMeasure` is rejected.
    """
    if not isinstance(measure, ProductMeasure):
        raise PreconditionError("recursive construction requires a product measure (independent inputs)")
    n = measure.dim
    q = int(quadrature_points)
    if q ** n > 40_000_000:
        raise HdmrError(f"tensor grid {q}^{n} too large")
    rules = [m.rule(q) for m in measure.marginals]
    nodes = [np.asarray(r[0], dtype=float) for r in rules]
    weights = [np.asarray(r[1], dtype=float) / np.sum(r[1]) for r in rules]
    shape = tuple(len(z) for z in nodes)
    mesh = np.meshgrid(*nodes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    values = np.asarray(predictor(pts), dtype=float).reshape(shape)
    all_axes = tuple(range(n))
    f0 = float(_contract(values, (), weights, all_axes))
    var = float(_contract((values - f0) ** 2, (), weights, all_axes))

    tables = {(): np.array(f0)}
    comps = {}
    for u in subsets_up_to(n, spec.max_order)[1:]:
        m_u = _contract(values, u, weights, all_axes) - f0
        lower = []
        for w in sorted(tables, key=subset_key):
            if w and set(w) < set(u):
                # broadcast lower table onto u's axes
                idx = tuple(slice(None) if i in w else None for i in u)
                m_u = m_u - tables[w][idx]
                lower.append(comps[w])
        tables[u] = m_u
        comps[u] = QuadratureComponent(u, m_u, lower, f0, predictor, nodes, weights, n)

    subs = sorted(comps, key=subset_key)
    k = len(subs)
    cov = np.zeros((k, k))
    for i, u in enumerate(subs):
        for j in range(i, k):
            v = subs[j]
            shared = tuple(sorted(set(u) & set(v)))
            a = _contract(tables[u], shared, weights, u)
            b = _contract(tables[v], shared, weights, v)
            prod = a * b
            cov[i, j] = cov[j, i] = float(_contract(prod, (), weights, shared)) if shared else float(a * b)
    return HdmrModel(
        f0,
        comps,
        spec.max_order,
        cov,
        var,
        n,
        measure.identifier,
        None,
        {"method": "recursive", "quadrature_points": q},
    )
