"""Partial dependence and derivative-based sensitivity measures for comparison with HDMR."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from itertools import product as iproduct
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .basis import as_subset
from .measure import AnyMeasure, EmpiricalMeasure, GaussianMeasure, ProductMeasure, quadrature

GRID_POINTS = 64
MIN_NEIGHBORS = 30
DEFAULT_QUAD = 12


class ComparatorError(ValueError):
    pass


class DerivativeError(ComparatorError):
    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


def _as_points(measure: AnyMeasure, quad_points: int = DEFAULT_QUAD) -> EmpiricalMeasure:
    return measure if isinstance(measure, EmpiricalMeasure) else quadrature(measure, quad_points)


def _splice(grid: np.ndarray, u: list, rest_rows: np.ndarray, rest: list, n: int) -> np.ndarray:
    """All combinations of ``grid`` rows (on u) with ``rest_rows`` (on rest)."""
    g, m = grid.shape[0], rest_rows.shape[0]
    pts = np.empty((g * m, n))
    pts[:, u] = np.repeat(grid, m, axis=0)
    pts[:, rest] = np.tile(rest_rows, (g, 1))
    return pts


@dataclass(frozen=True, eq=False)
class PdProfile:
    """Partial-dependence profile of ``f`` on ``x_u`` over a tensor grid.

    ``function`` evaluates the uncentered profile at arbitrary points (full
    ``n``-column rows; only the ``u`` columns are read); ``constant`` is the
    ``f0`` subtracted by the centered variant.
    """

    subset: tuple
    grid: tuple
    values: np.ndarray
    variant: str
    function: Callable = None
    constant: float = 0.0
    centered: bool = True
    mask: np.ndarray = None

    def evaluate(self, x) -> np.ndarray:
        if self.function is None:
            raise ComparatorError("profile has no evaluator")
        out = self.function(np.atleast_2d(np.asarray(x, dtype=float)))
        return out - self.constant if self.centered else out

    def grid_points(self) -> np.ndarray:
        return np.array(list(iproduct(*self.grid)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([f"x{i + 1}" for i in self.subset] + ["value", "mask"])
        mask = np.zeros(self.values.size, dtype=bool) if self.mask is None else self.mask.ravel()
        for p, v, m in zip(self.grid_points(), self.values.ravel(), mask):
            w.writerow([f"{c:.10g}" for c in p] + [f"{v:.10g}", int(m)])
        return buf.getvalue()


def default_grid(measure: AnyMeasure, subset, points: int = GRID_POINTS) -> tuple:
    """Equally spaced points over the 1st-99th percentiles of each ``x_i``, ``i`` in ``u``."""
    u = as_subset(subset)
    axes = []
    for i in u:
        if isinstance(measure, EmpiricalMeasure):
            col = measure.samples[:, i]
            order = np.argsort(col)
            cw = np.cumsum(measure.weights[order])
            lo = col[order][np.searchsorted(cw, 0.01)]
            hi = col[order][min(np.searchsorted(cw, 0.99), col.size - 1)]
        elif isinstance(measure, GaussianMeasure):
            z = stats.norm.ppf(0.99)
            lo, hi = measure.mean[i] - z * measure.stdev[i], measure.mean[i] + z * measure.stdev[i]
        elif isinstance(measure, ProductMeasure):
            x = quadrature(ProductMeasure((measure.marginals[i],)), 64)
            lo, hi = x.samples[:, 0].min(), x.samples[:, 0].max()
        else:
            raise ComparatorError(f"cannot build a grid for {type(measure).__name__}")
        if hi <= lo:
            hi = lo + 1.0
        axes.append(np.linspace(lo, hi, points))
    return tuple(axes)


def _check_grid(subset, grid) -> tuple:
    u = as_subset(subset)
    if grid is None:
        return None
    if isinstance(grid, np.ndarray) and grid.ndim == 1 or (len(u) == 1 and np.ndim(grid) == 1):
        grid = (np.asarray(grid, dtype=float),)
    grid = tuple(np.asarray(g, dtype=float) for g in grid)
    if len(grid) != len(u):
        raise ComparatorError("need one grid axis per variable in the subset")
    for g in grid:
        if g.size == 0:
            raise ComparatorError("empty grid")
        if np.any(np.diff(g) <= 0):
            raise ComparatorError("grid axes must be strictly increasing")
    return grid


def _mean_value(predictor, emp: EmpiricalMeasure) -> float:
    return float(emp.weights @ np.asarray(predictor(emp.samples), dtype=float))


def pd_marginal(predictor: Callable, measure: AnyMeasure, subset, grid=None, centered: bool = True, quad_points: int = DEFAULT_QUAD) -> PdProfile:
    """``M^u f(x_u) = int f(x_u, x_{-u}) dmu_{-u}`` with ``x_{-u}`` from the marginal law."""
    u = list(as_subset(subset))
    grid = _check_grid(u, grid) or default_grid(measure, u)
    emp = _as_points(measure, quad_points)
    n = emp.dim
    rest = [i for i in range(n) if i not in u]
    rows = emp.samples[:, rest]
    w = emp.weights

    def function(x, chunk=2_000_000):
        x = np.atleast_2d(x)
        xu = x[:, u]
        out = np.empty(xu.shape[0])
        step = max(1, chunk // rows.shape[0])
        for s in range(0, xu.shape[0], step):
            pts = _splice(xu[s:s + step], u, rows, rest, n)
            vals = np.asarray(predictor(pts), dtype=float).reshape(-1, rows.shape[0])
            out[s:s + step] = vals @ w
        return out

    f0 = _mean_value(predictor, emp)
    gp = np.array(list(iproduct(*grid)))
    full = np.zeros((gp.shape[0], n))
    full[:, u] = gp
    vals = function(full)
    if not np.all(np.isfinite(vals)):
        raise ComparatorError("non-finite partial dependence values")
    vals = vals - f0 if centered else vals
    return PdProfile(tuple(u), grid, vals.reshape([g.size for g in grid]), "marginal", function, f0, centered)


def _silverman(col: np.ndarray, w: np.ndarray) -> float:
    m = w @ col
    sd = np.sqrt(w @ (col - m) ** 2)
    n_eff = 1.0 / np.sum(w**2)
    q75, q25 = np.percentile(col, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    return 0.9 * spread * n_eff ** (-0.2) if spread > 0 else 1.0


def pd_conditional(
    predictor: Callable,
    measure: AnyMeasure,
    subset,
    grid=None,
    bandwidth=None,
    centered: bool = True,
    min_neighbors: int = MIN_NEIGHBORS,
    quad_points: int = DEFAULT_QUAD,
) -> PdProfile:
    """``N^u f(x_u) = E[f | x_u]``.

    Analytic Gaussian measures use the exact conditional law; empirical
    measures use a Gaussian-kernel smoother (Silverman bandwidth by
    default). Grid points with fewer than ``min_neighbors`` effective
    neighbours are flagged in ``mask``.
    """
    u = list(as_subset(subset))
    grid = _check_grid(u, grid) or default_grid(measure, u)
    gp = np.array(list(iproduct(*grid)))

    if isinstance(measure, GaussianMeasure):
        n = measure.dim
        z, wz = np.polynomial.hermite_e.hermegauss(quad_points)
        wz = wz / wz.sum()

        def function(x):
            x = np.atleast_2d(x)
            rest, cmean, ccov = measure.conditional(u, x[:, u])
            if not rest:
                return np.asarray(predictor(x), dtype=float)
            vals, vecs = np.linalg.eigh(ccov)
            fac = vecs * np.sqrt(np.clip(vals, 0, None))
            nodes = np.array(list(iproduct(z, repeat=len(rest))))
            wts = np.prod(np.array(list(iproduct(wz, repeat=len(rest)))), axis=1)
            m = nodes.shape[0]
            pts = np.empty((x.shape[0] * m, n))
            pts[:, u] = np.repeat(x[:, u], m, axis=0)
            pts[:, rest] = np.repeat(cmean, m, axis=0) + np.tile(nodes @ fac.T, (x.shape[0], 1))
            return np.asarray(predictor(pts), dtype=float).reshape(x.shape[0], m) @ wts

        f0 = _mean_value(predictor, quadrature(measure, quad_points))
        full = np.zeros((gp.shape[0], n))
        full[:, u] = gp
        vals = function(full)
        mask = np.zeros(vals.size, dtype=bool)
    else:
        if not isinstance(measure, EmpiricalMeasure):
            if isinstance(measure, ProductMeasure):
                # independence: conditional law equals the marginal one
                prof = pd_marginal(predictor, measure, u, grid, centered, quad_points)
                return PdProfile(prof.subset, prof.grid, prof.values, "conditional", prof.function, prof.constant, centered, np.zeros(prof.values.size, bool))
            raise ComparatorError(f"unsupported measure {type(measure).__name__}")
        xs = measure.samples
        w = measure.weights
        y = np.asarray(predictor(xs), dtype=float)
        f0 = float(w @ y)
        h = np.atleast_1d(bandwidth) if bandwidth is not None else np.array([_silverman(xs[:, i], w) for i in u])
        if h.size == 1:
            h = np.full(len(u), h[0])

        def kernel(x):
            d = (x[:, None, :] - xs[None, :, u]) / h
            return np.exp(-0.5 * np.sum(d * d, axis=2)) * w

        def function(x):
            x = np.atleast_2d(x)
            out = np.empty(x.shape[0])
            for s in range(0, x.shape[0], 256):
                k = kernel(x[s:s + 256, u])
                out[s:s + 256] = (k @ y) / np.maximum(k.sum(axis=1), 1e-300)
            return out

        full = np.zeros((gp.shape[0], measure.dim))
        full[:, u] = gp
        vals = function(full)
        k = kernel(gp)
        eff = k.sum(axis=1) ** 2 / np.maximum((k**2).sum(axis=1), 1e-300)
        mask = eff < min_neighbors
        if mask.any():
            warnings.warn(f"{int(mask.sum())} grid points have fewer than {min_neighbors} effective neighbours", RuntimeWarning, stacklevel=2)
    vals = vals - f0 if centered else vals
    return PdProfile(tuple(u), grid, vals.reshape([g.size for g in grid]), "conditional", function, f0, centered, mask)


def pd_sensitivity(profiles: Sequence[PdProfile], measure: AnyMeasure, predictor: Callable = None, total_variance: float = None, quad_points: int = DEFAULT_QUAD) -> dict:
    """Profile-based ``(Sa, Sb, S)`` per subset, treating centered profiles as components.

    Second moments ``<f~_u, f~_v>`` of the centered profiles are divided by
    ``Var(f)``; they coincide with covariances whenever profiles are
    mean-zero, which partial dependence under correlation is not.
    """
    emp = _as_points(measure, quad_points)
    if total_variance is None:
        if predictor is None:
            raise ComparatorError("need either the predictor or Var(f)")
        total_variance = emp.variance(np.asarray(predictor(emp.samples), dtype=float))
    if not total_variance > 0:
        raise ComparatorError("Var(f) must be positive")
    cols = np.column_stack([p.function(emp.samples) - p.constant for p in profiles])
    gram = cols.T @ (cols * emp.weights[:, None]) / total_variance
    out = {}
    for k, p in enumerate(profiles):
        sa = float(gram[k, k])
        sb = float(gram[k].sum() - gram[k, k])
        out[p.subset] = (sa, sb, sa + sb)
    return out


def finite_difference(predictor: Callable, alpha: Sequence[int], h: float = 1e-4) -> Callable:
    """Central-difference mixed partial ``D^alpha f`` (orders up to 2 per variable)."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 or a > 2 for a in alpha):
        raise ComparatorError("finite differences support per-variable orders 0, 1 or 2")
    stencils = {0: [(0.0, 1.0)], 1: [(1.0, 0.5 / h), (-1.0, -0.5 / h)], 2: [(1.0, 1 / h**2), (0.0, -2 / h**2), (-1.0, 1 / h**2)]}
    terms = [stencils[a] for a in alpha]

    def deriv(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for combo in iproduct(*terms):
            shift = np.array([s for s, _ in combo]) * h
            coef = np.prod([c for _, c in combo])
            out += coef * np.asarray(predictor(x + shift), dtype=float)
        return out

    return deriv


def dgsm(
    derivative,
    measure: AnyMeasure,
    alpha: Sequence[int],
    weight: Callable = None,
    normalized: bool = False,
    family: Sequence[Sequence[int]] = None,
    h: float = 1e-4,
    quad_points: int = DEFAULT_QUAD,
) -> float:
    """``int (D^alpha f)^2 w dmu``, optionally divided by the sum over ``family``.

    ``derivative`` is either a mapping ``{multi-index: callable}`` of
    analytic partials or the predictor itself (central differences with
    step ``h``). The weight defaults to 1.
    """
    emp = _as_points(measure, quad_points)
    alpha = tuple(int(a) for a in alpha)

    def raw(a):
        a = tuple(int(v) for v in a)
        if isinstance(derivative, Mapping):
            if a not in derivative:
                raise ComparatorError(f"no analytic partial for multi-index {a}")
            fn = derivative[a]
        else:
            fn = finite_difference(derivative, a, h)
        vals = np.asarray(fn(emp.samples), dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            raise DerivativeError(f"non-finite derivative at {emp.samples[bad][0].tolist()}", emp.samples[bad][0])
        wv = 1.0 if weight is None else np.asarray(weight(emp.samples), dtype=float)
        return float(emp.weights @ (vals**2 * wv))

    value = raw(alpha)
    if not normalized:
        return value
    fam = [alpha] if family is None else [tuple(int(v) for v in a) for a in family]
    total = sum(raw(a) for a in fam)
    if total <= 0:
        raise ComparatorError("normalizing DGSM sum is zero")
    return value / total


def dgsm_indices(derivative, measure: AnyMeasure, family: Sequence[Sequence[int]], **kw) -> dict:
    """Normalized DGSM for every multi-index of ``family``."""
    raw = {tuple(a): dgsm(derivative, measure, a, **kw) for a in family}
    total = sum(raw.values())
    if total <= 0:
        raise ComparatorError("normalizing DGSM sum is zero")
    return {a: v / total for a, v in raw.items()}


# ---------------------------------------------------------------------------
# Side-by-side table for the bivariate Gaussian polynomial
# ---------------------------------------------------------------------------

TABLE_ROWS = ("HDMR", "PD (marg.)", "PD (cond.)", "DGSM f", "DGSM var")


def _point_mass_measure(values) -> ProductMeasure:
    from .measure import PointMasses

    return ProductMeasure(tuple(PointMasses((float(v),), (1.0,)) for v in values))


def first_order_table(params, rhos: Sequence[float]) -> dict:
    """Sum of first-order importances per diagnostic and correlation.

    Returns ``{row: [value for rho in rhos]}`` with rows HDMR, marginal
    PD, conditional PD, normalized DGSM of ``f`` over
    ``{d1, d2, d1 d2}`` and normalized DGSM of ``Var f`` as a function of
    ``(b1, b2, b12)`` at the given coefficients.
    """
    from . import oracles

    table = {r: [] for r in TABLE_ROWS}
    for rho in rhos:
        p = params.with_rho(float(rho))
        meas = p.measure()
        f = oracles.gauss_poly_target(p)
        idx = oracles.gauss_poly_indices(p)
        table["HDMR"].append(idx["S1"] + idx["S2"])
        var = idx["variance"]
        for row, fn in (("PD (marg.)", pd_marginal), ("PD (cond.)", pd_conditional)):
            profs = [fn(f, meas, (i,), grid=np.array([0.0, 1.0])) for i in (0, 1)]
            s = pd_sensitivity(profs, meas, total_variance=var)
            table[row].append(s[(0,)][2] + s[(1,)][2])
        fam = [(1, 0), (0, 1), (1, 1)]
        d = dgsm_indices(oracles.gauss_poly_gradient(p), meas, fam)
        table["DGSM f"].append(d[(1, 0)] + d[(0, 1)])
        _, grads = oracles.gauss_poly_variance_in_beta(p)
        pm = _point_mass_measure(p.beta[1:])
        d = dgsm_indices(grads, pm, [(1, 0, 0), (0, 1, 0), (0, 0, 1)])
        table["DGSM var"].append(d[(1, 0, 0)] + d[(0, 1, 0)])
    return table


def format_table(table: dict, rhos: Sequence[float], digits: int = 4) -> str:
    head = ["Diagnostic"] + [f"S({r:g})" for r in rhos]
    rows = [head] + [[k] + [f"{v:.{digits}f}" for v in vals] for k, vals in table.items()]
    widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
    lines = ["  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
