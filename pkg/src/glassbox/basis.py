"""Hierarchically-orthogonal feature bases indexed by variable subsets.

A raw basis for subset ``u`` holds elements that depend on exactly the
variables in ``u``. :func:`orthogonalize` stacks the raw blocks of every
``w`` in the power set of ``u`` (constant first, then by size, then
lexicographically), runs a Householder QR under the measure's inner
product and keeps the trailing block belonging to ``u``. The result is
orthogonal to every function on a strict subset of ``u`` but, under a
correlated measure, not to its siblings.

Subsets are tuples of 0-based variable indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product as iproduct
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .measure import (
    AnyMeasure,
    EmpiricalMeasure,
    GaussianMeasure,
    MeasureError,
    ProductMeasure,
    domain_box,
    moment,
    quadrature,
)

FAMILIES = ("monomial", "fourier", "tree")
RANK_TOL = 1e-10


class BasisError(ValueError):
    pass


class OrderError(BasisError):
    pass


class ShapeError(BasisError):
    pass


def as_subset(indices) -> tuple:
    s = tuple(sorted(int(i) for i in indices))
    if len(set(s)) != len(s):
        raise BasisError(f"duplicate indices in subset {indices!r}")
    if any(i < 0 for i in s):
        raise BasisError("subset indices must be non-negative")
    return s


def subset_key(u: tuple):
    """Graded lexicographic sort key."""
    return (len(u), u)


def subsets_up_to(n: int, order: int) -> list:
    """All subsets of ``range(n)`` with at most ``order`` elements, graded order."""
    out = []
    for k in range(min(order, n) + 1):
        out.extend(combinations(range(n), k))
    return out


def power_set(u: tuple) -> list:
    out = []
    for k in range(len(u) + 1):
        out.extend(combinations(u, k))
    return out


def label(u: tuple, names=None) -> str:
    """1-based display label, e.g. ``(1, 3)``."""
    if names is not None:
        return "(" + ", ".join(repr(names[i]) for i in u) + ("," if len(u) == 1 else "") + ")"
    return "(" + ", ".join(str(i + 1) for i in u) + ("," if len(u) == 1 else "") + ")"


# ---------------------------------------------------------------------------
# Raw basis elements
# ---------------------------------------------------------------------------

_ELEMENT_TYPES: dict = {}


def register_element(kind: str):
    def deco(cls):
        _ELEMENT_TYPES[kind] = cls
        cls.kind = kind
        return cls

    return deco


def element_from_dict(d: dict):
    if d.get("kind") not in _ELEMENT_TYPES:
        # tree elements register themselves on import
        from . import blackbox  # noqa: F401
    try:
        cls = _ELEMENT_TYPES[d["kind"]]
    except KeyError:
        raise BasisError(f"unknown basis element kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


@register_element("product")
@dataclass(frozen=True)
class ProductTerm:
    """Product of univariate factors, one per variable.

    A factor is ``("pow", var, p)`` for ``x^p`` or ``("sin"|"cos", var, k,
    lo, hi)`` for a trigonometric term of frequency ``k`` over the period
    ``[lo, hi]``. The empty product is the constant 1.
    """

    factors: tuple = ()

    @property
    def variables(self) -> tuple:
        return tuple(f[1] for f in self.factors)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        out = np.ones(x.shape[0])
        for f in self.factors:
            col = x[:, f[1]]
            if f[0] == "pow":
                out = out * col ** f[2]
            else:
                lo, hi = f[3], f[4]
                t = 2.0 * np.pi * (col - lo) / (hi - lo) - np.pi
                out = out * (np.sin(f[2] * t) if f[0] == "sin" else np.cos(f[2] * t))
        return out

    @property
    def polynomial(self) -> bool:
        return all(f[0] == "pow" for f in self.factors)

    def powers(self, n: int) -> tuple:
        a = [0] * n
        for f in self.factors:
            a[f[1]] += f[2]
        return tuple(a)

    def to_dict(self) -> dict:
        return {"kind": "product", "factors": [list(f) for f in self.factors]}

    @classmethod
    def from_dict(cls, d: dict) -> "ProductTerm":
        facs = []
        for f in d["factors"]:
            facs.append((f[0], int(f[1]), int(f[2])) + tuple(float(v) for v in f[3:]))
        return cls(tuple(facs))

    def __str__(self):
        if not self.factors:
            return "1"
        parts = []
        for f in self.factors:
            if f[0] == "pow":
                parts.append(f"x{f[1] + 1}" + (f"^{f[2]}" if f[2] != 1 else ""))
            else:
                parts.append(f"{f[0]}({f[2]}t{f[1] + 1})")
        return "*".join(parts)


CONSTANT = ProductTerm(())


@register_element("combination")
@dataclass(frozen=True, eq=False)
class Combination:
    """Fixed linear combination of other elements."""

    elements: tuple
    coefficients: np.ndarray

    @property
    def variables(self) -> tuple:
        vs = set()
        for e in self.elements:
            vs.update(e.variables)
        return tuple(sorted(vs))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.column_stack([e.evaluate(x) for e in self.elements]) @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "kind": "combination",
            "elements": [e.to_dict() for e in self.elements],
            "coefficients": np.asarray(self.coefficients).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(element_from_dict(e) for e in d["elements"]), np.array(d["coefficients"]))


# ---------------------------------------------------------------------------
# Basis specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Which raw basis to build.

    ``domain`` (per-variable ``(lo, hi)``) is the period box for the Fourier
    family; when omitted it is taken from the measure. ``blocks``, keyed by
    subset, replaces the generated raw elements; the tree family requires it.
    """

    family: str = "monomial"
    degree: int = 1
    max_order: int = 1
    domain: np.ndarray = None
    blocks: Mapping = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise BasisError(f"unknown basis family {self.family!r}")
        if self.degree < 1:
            raise BasisError("per-variable degree must be >= 1")
        if self.max_order < 0:
            raise BasisError("max_order must be >= 0")
        if self.family == "tree" and self.blocks is None:
            raise BasisError("tree family needs raw blocks from the blackbox module")
        if self.domain is not None:
            object.__setattr__(self, "domain", np.asarray(self.domain, dtype=float))

    def with_domain(self, measure) -> "BasisSpec":
        if self.family != "fourier" or self.domain is not None:
            return self
        if isinstance(measure, GaussianMeasure):
            raise BasisError("Fourier bases need a bounded box domain, not a Gaussian measure")
        try:
            box = domain_box(measure)
        except MeasureError as exc:
            raise BasisError(str(exc)) from None
        return BasisSpec(self.family, self.degree, self.max_order, box, self.blocks)


def raw_basis(spec: BasisSpec, subset) -> list:
    """Raw elements depending on exactly the variables in ``subset``."""
    u = as_subset(subset)
    if len(u) > spec.max_order:
        raise OrderError(f"subset {u} exceeds max_order {spec.max_order}")
    if not u:
        return [CONSTANT]
    if spec.blocks is not None:
        return list(spec.blocks.get(u, ()))
    if spec.family == "monomial":
        return [
            ProductTerm(tuple(("pow", i, p) for i, p in zip(u, pw)))
            for pw in iproduct(range(1, spec.degree + 1), repeat=len(u))
        ]
    if spec.family == "fourier":
        if spec.domain is None:
            raise BasisError("Fourier basis requires a domain box")
        per_var = []
        for i in u:
            lo, hi = spec.domain[i]
            per_var.append(
                [(kind, i, k, float(lo), float(hi)) for k in range(1, spec.degree + 1) for kind in ("sin", "cos")]
            )
        return [ProductTerm(tuple(fs)) for fs in iproduct(*per_var)]
    return list(spec.blocks.get(u, ()))


# ---------------------------------------------------------------------------
# Orthogonalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrthogonalBasis:
    """Hierarchically-orthogonal elements for one subset.

    ``evaluate(x) = stack(x) @ transform`` where ``stack`` evaluates the
    retained raw elements of every subset of ``subset``.
    """

    subset: tuple
    elements: tuple
    transform: np.ndarray
    raw_dim: int
    dropped: tuple = ()
    family: str = "monomial"
    degree: int = 1

    @property
    def dim(self) -> int:
        return self.transform.shape[1]

    def evaluate(self, x: np.ndarray, cache: dict = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dim == 0:
            return np.zeros((x.shape[0], 0))
        cols = [_eval_cached(e, x, cache) for e in self.elements]
        return np.column_stack(cols) @ self.transform

    def as_elements(self) -> list:
        return [Combination(self.elements, self.transform[:, j].copy()) for j in range(self.dim)]

    def to_dict(self) -> dict:
        return {
            "subset": list(self.subset),
            "family": self.family,
            "degree": self.degree,
            "raw_dim": self.raw_dim,
            "elements": [e.to_dict() for e in self.elements],
            "transform": self.transform.tolist(),
            "dropped": [e.to_dict() for e in self.dropped],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrthogonalBasis":
        elems = tuple(element_from_dict(e) for e in d["elements"])
        t = np.array(d["transform"], dtype=float).reshape(len(elems), -1)
        return cls(
            tuple(d["subset"]),
            elems,
            t,
            int(d["raw_dim"]),
            tuple(element_from_dict(e) for e in d.get("dropped", [])),
            d.get("family", "monomial"),
            int(d.get("degree", 1)),
        )


def _eval_cached(e, x, cache):
    if cache is None:
        return e.evaluate(x)
    key = id(e)
    hit = cache.get(key)
    if hit is None:
        hit = (e, e.evaluate(x))
        cache[key] = hit
    return hit[1]


def default_quadrature_points(spec: BasisSpec) -> int:
    if spec.family == "fourier":
        return max(32, 4 * spec.degree + 8)
    return max(8, 2 * spec.degree + 4)


def construction_measure(measure: AnyMeasure, spec: BasisSpec, quad_points: int = None) -> EmpiricalMeasure:
    """Weighted point set carrying the inner product used for orthogonalization."""
    if isinstance(measure, EmpiricalMeasure):
        return measure
    if isinstance(measure, GaussianMeasure) and spec.family == "fourier":
        raise BasisError("Fourier bases need a bounded box domain, not a Gaussian measure")
    if spec.family == "tree":
        raise BasisError("tree bases are built on the empirical training measure")
    m = quad_points or default_quadrature_points(spec)
    if m ** measure.dim > 4_000_000:
        raise BasisError(
            f"tensor quadrature with {m}^{measure.dim} nodes is too large; sample the measure instead"
        )
    return quadrature(measure, m)


def _householder_keep(a: np.ndarray, tol: float = RANK_TOL):
    """Column selection and R factor of ``a`` with rank-deficient columns removed.

    Columns are processed in order; a column whose pivot falls below
    ``tol`` times the leading pivot is dropped and the factorization is
    redone without it.
    """
    keep = list(range(a.shape[1]))
    while True:
        if not keep:
            return keep, np.zeros((0, 0))
        r = np.linalg.qr(a[:, keep], mode="r")
        diag = np.abs(np.diag(r))
        ref = diag.max() if diag.size else 0.0
        bad = np.nonzero(diag <= tol * ref)[0] if ref > 0 else np.arange(len(keep))
        if bad.size == 0:
            signs = np.sign(np.diag(r))
            return keep, r * signs[:, None]
        del keep[int(bad[0])]


def orthogonalize(
    spec: BasisSpec,
    subset,
    measure: AnyMeasure,
    quad_points: int = None,
    cache: dict = None,
) -> OrthogonalBasis:
    """Hierarchically-orthonormal basis for ``subset`` under ``measure``.

    Analytic measures are represented by an exact tensor Gauss rule; the
    factorization then runs on the weighted node matrix exactly as for
    samples. Raw elements of ``subset`` that fall numerically into the
    span of their ancestors are dropped and listed in ``dropped``.
    """
    u = as_subset(subset)
    spec = spec.with_domain(measure)
    emp = construction_measure(measure, spec, quad_points)
    if u and max(u) >= emp.dim:
        raise ShapeError(f"subset {u} refers to variables beyond dimension {emp.dim}")
    own = raw_basis(spec, u)
    stack = []
    for w in power_set(u):
        if w == u:
            continue
        stack.extend(raw_basis(spec, w) if w else [CONSTANT])
    n_anc = len(stack)
    stack.extend(own)
    if not u:
        t = np.ones((1, 1))
        return OrthogonalBasis((), (CONSTANT,), t, 1, (), spec.family, spec.degree)
    x = emp.samples
    sw = np.sqrt(emp.weights)
    cols = np.column_stack([_eval_cached(e, x, cache) for e in stack]) * sw[:, None]
    keep, r = _householder_keep(cols)
    kept = [stack[j] for j in keep]
    own_pos = [p for p, j in enumerate(keep) if j >= n_anc]
    dropped = tuple(stack[j] for j in range(n_anc, len(stack)) if j not in keep)
    rinv = solve_triangular(r, np.eye(r.shape[0]), lower=False)
    transform = rinv[:, own_pos] if own_pos else np.zeros((len(kept), 0))
    return OrthogonalBasis(u, tuple(kept), transform, len(own), dropped, spec.family, spec.degree)


def build_bases(spec: BasisSpec, n: int, measure: AnyMeasure, subsets=None, quad_points=None) -> list:
    """Orthogonal bases for every subset up to ``spec.max_order``, graded order."""
    if spec.max_order > n:
        raise OrderError(f"max_order {spec.max_order} exceeds number of variables {n}")
    if subsets is None:
        subsets = subsets_up_to(n, spec.max_order)
    subsets = sorted({as_subset(s) for s in subsets} | {()}, key=subset_key)
    cache = {}
    emp = construction_measure(measure, spec.with_domain(measure), quad_points)
    return [orthogonalize(spec, u, emp, cache=cache) for u in subsets]


def assemble_feature_matrix(bases: Sequence[OrthogonalBasis], x, cache: dict = None) -> np.ndarray:
    """Column blocks of every basis evaluated at the rows of ``x``."""
    if isinstance(x, EmpiricalMeasure):
        x = x.samples
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if cache is None:
        cache = {}
    n = x.shape[1]
    blocks = []
    for b in bases:
        if b.subset and max(b.subset) >= n:
            raise ShapeError(f"basis on {b.subset} does not fit {n}-column data")
        blocks.append(b.evaluate(x, cache))
    return np.hstack(blocks) if blocks else np.zeros((x.shape[0], 0))


def moment_gram(elements: Sequence[ProductTerm], measure) -> np.ndarray:
    """Gram matrix of polynomial elements from exact moments of ``measure``."""
    n = measure.dim
    pw = [e.powers(n) for e in elements]
    m = len(pw)
    g = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            g[i, j] = g[j, i] = moment(measure, tuple(a + b for a, b in zip(pw[i], pw[j])))
    return g
