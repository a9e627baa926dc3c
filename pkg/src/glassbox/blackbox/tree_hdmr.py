"""HDMR extraction from tree ensembles via ridge combination and tree-function bases."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import hdmr
from ..basis import BasisSpec, subset_key
from ..measure import EmpiricalMeasure
from .trees import TreeEnsemble, TreeError

LAMBDA_GRID = (0.0, 1e-6, 1e-4, 1e-2, 1.0, 1e2)
K_FOLDS = 5


@dataclass(frozen=True, eq=False)
class RidgeCombination:
    """``F(x) = intercept + sum_a beta_a g_a(x)`` over (ensemble, subspace) tree sums."""

    elements: tuple
    labels: tuple
    beta: np.ndarray
    intercept: float
    lam: float
    cv_errors: dict

    def columns(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.elements:
            return np.zeros((x.shape[0], 0))
        return np.column_stack([e.evaluate(x) for e in self.elements])

    def predict(self, x) -> np.ndarray:
        return self.intercept + self.columns(x) @ self.beta

    __call__ = predict


def _ridge(b: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float):
    """Weighted ridge with an unpenalized intercept; ``lam`` is per unit weight."""
    mb = w @ b
    my = w @ y
    bc = b - mb
    yc = y - my
    g = bc.T @ (bc * w[:, None])
    rhs = bc.T @ (w * yc)
    if lam > 0:
        beta = np.linalg.solve(g + lam * np.eye(g.shape[0]), rhs)
    else:
        beta = np.linalg.lstsq(g, rhs, rcond=1e-12)[0]
    return beta, float(my - mb @ beta)


def raw_columns(ensembles: Sequence[TreeEnsemble], max_order: int = None):
    """Per-(ensemble, subspace) aggregated tree functions and the summed base predictions."""
    elements, labels = [], []
    base = 0.0
    for i, ens in enumerate(ensembles):
        base += ens.base_prediction
        for u, g in ens.subspace_functions().items():
            if not u:
                # split-free trees are constants
                base += float(sum(t.value[0] for t in g.trees))
                continue
            if max_order is not None and len(u) > max_order:
                continue
            elements.append(g)
            labels.append((i, u))
    return elements, labels, base


def combine_ensembles(
    ensembles: Sequence[TreeEnsemble],
    x,
    y,
    lambda_grid: Sequence[float] = LAMBDA_GRID,
    k_folds: int = K_FOLDS,
    seed: int = 0,
    max_order: int = None,
    weights=None,
) -> RidgeCombination:
    """Ridge regression of ``y`` on the tree-function columns, ``lambda`` chosen by K-fold CV."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise TreeError("x and y have different numbers of rows")
    elements, labels, base = raw_columns(ensembles, max_order)
    if not elements:
        return RidgeCombination((), (), np.zeros(0), float(np.mean(y)), 0.0, {})
    b = np.column_stack([e.evaluate(x) for e in elements])
    w = np.full(y.size, 1.0 / y.size) if weights is None else np.asarray(weights, dtype=float)
    grid = sorted(float(v) for v in lambda_grid)
    if any(v < 0 for v in grid):
        raise TreeError("lambda values must be non-negative")
    k = max(2, min(int(k_folds), y.size))
    folds = np.array_split(np.random.default_rng(seed).permutation(y.size), k)
    errs = {}
    for lam in grid:
        sq = 0.0
        for f in folds:
            tr = np.ones(y.size, dtype=bool)
            tr[f] = False
            wt = w[tr] / w[tr].sum()
            beta, c = _ridge(b[tr], y[tr], wt, lam)
            sq += float(np.sum(w[f] * (y[f] - c - b[f] @ beta) ** 2))
        errs[lam] = sq
    best = min(grid, key=lambda v: (errs[v], v))
    beta, c = _ridge(b, y, w, best)
    return RidgeCombination(tuple(elements), tuple(labels), beta, c, best, errs)


def tree_hdmr(
    ensembles: Sequence[TreeEnsemble],
    measure: EmpiricalMeasure,
    response,
    lambda_grid: Sequence[float] = LAMBDA_GRID,
    k_folds: int = K_FOLDS,
    order: int = None,
    seed: int = 0,
    variance: str = "model",
) -> hdmr.HdmrModel:
    """Glass-box HDMR of a ridge-combined set of tree ensembles.

    The raw basis of subset ``u`` holds one aggregated tree function per
    ensemble that splits on exactly ``u``; these are orthogonalized
    hierarchically on ``measure`` and the combined prediction is projected
    onto them. Indices are normalized by the variance of the combined
    model (``variance="model"``) or of the response (``"response"``).
    """
    if not isinstance(measure, EmpiricalMeasure):
        raise TreeError("tree extraction needs the empirical training measure")
    y = np.asarray(response, dtype=float).ravel()
    if y.size != measure.size:
        raise TreeError("response length differs from the number of samples")
    comb = combine_ensembles(ensembles, measure.samples, y, lambda_grid, k_folds, seed, order, measure.weights)
    occupied = sorted({u for _, u in comb.labels}, key=subset_key)
    top = max((len(u) for u in occupied), default=0)
    order = top if order is None else int(order)
    blocks = {}
    for e, (_, u) in zip(comb.elements, comb.labels):
        blocks.setdefault(u, []).append(e)
    f = comb.predict(measure.samples)
    spec = BasisSpec("tree", 1, max(order, 0), blocks=blocks)
    model = hdmr.fit(f, measure, spec, subsets=[u for u in occupied if len(u) <= order])
    meta = dict(model.metadata)
    meta.update(
        lam=comb.lam,
        cv_errors={str(k): v for k, v in comb.cv_errors.items()},
        beta=comb.beta.tolist(),
        columns=[[i, list(u)] for i, u in comb.labels],
        n_ensembles=len(ensembles),
        occupied=[list(u) for u in occupied],
    )
    var = model.total_variance
    if variance == "response":
        var = measure.variance(y)
    elif variance != "model":
        raise TreeError("variance must be 'model' or 'response'")
    return hdmr.HdmrModel(
        model.constant,
        model.components,
        model.order,
        model.covariance,
        var,
        model.n_vars,
        model.fitting_measure_id,
        measure.variable_names,
        meta,
    )
