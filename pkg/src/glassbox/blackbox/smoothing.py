"""Spectral filtering of component functions onto band-limited Fourier series."""

from __future__ import annotations

import numpy as np

from .. import hdmr
from ..basis import BasisSpec, orthogonalize
from ..measure import EmpiricalMeasure, GaussianMeasure, MeasureError, domain_box


class DomainError(ValueError):
    pass


def _grid_size(k: int, degree: int) -> int:
    base = {1: 2048, 2: 128}.get(k, 24)
    return max(base, 4 * degree + 8)


def _midpoint_grid(box: np.ndarray, u: tuple, m: int) -> np.ndarray:
    """Midpoint tensor grid over the coordinates in ``u``; the rest sit at the box centre."""
    axes = [box[i, 0] + (np.arange(m) + 0.5) * (box[i, 1] - box[i, 0]) / m for i in u]
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.tile(box.mean(axis=1), (mesh[0].size, 1))
    for i, g in zip(u, mesh):
        x[:, i] = g.ravel()
    return x


def fourier_smooth(component, degree: int, domain, points_per_dim: int = None) -> hdmr.ComponentFunction:
    """L2 projection of ``component`` onto the zero-mean Fourier basis of degree ``degree``.

    ``domain`` is an ``(n, 2)`` box or a bounded measure; the projection is
    taken under the uniform law on the box, computed with a midpoint rule.
    """
    if isinstance(domain, GaussianMeasure):
        raise DomainError("Fourier smoothing needs a bounded box domain")
    if not isinstance(domain, np.ndarray) and hasattr(domain, "dim"):
        try:
            domain = domain_box(domain)
        except MeasureError as exc:
            raise DomainError(str(exc)) from None
    box = np.atleast_2d(np.asarray(domain, dtype=float))
    if box.shape[1] != 2 or not np.all(np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
        raise DomainError("domain must be a finite (n, 2) box with lo < hi")
    if degree < 1:
        raise DomainError("degree must be >= 1")
    u = tuple(component.subset)
    if not u:
        raise DomainError("the constant component has nothing to smooth")
    m = points_per_dim or _grid_size(len(u), degree)
    x = _midpoint_grid(box, u, m)
    grid = EmpiricalMeasure(x)
    basis = orthogonalize(BasisSpec("fourier", degree, len(u), domain=box), u, grid)
    phi = basis.evaluate(x)
    y = component.evaluate(x)
    coef = grid.weights * y @ phi
    # basis is orthonormal on the grid, so the projection is a plain inner product
    return hdmr.ComponentFunction(u, coef, basis)


def l2_norm(fn, domain, subset, points_per_dim: int = None) -> float:
    """``||fn||`` under the uniform law on the box restricted to ``subset``."""
    box = np.atleast_2d(np.asarray(domain, dtype=float))
    u = tuple(subset)
    m = points_per_dim or _grid_size(len(u), 1)
    x = _midpoint_grid(box, u, m)
    return float(np.sqrt(np.mean(np.asarray(fn(x)) ** 2)))
