"""Structural and correlative sensitivity indices and level-set queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .basis import as_subset, label, subset_key
from .hdmr import HdmrModel

QUERIES = ("T_eps", "R_eps", "I_eps", "X_eps", "P_eps", "reduced_order")


class DegenerateModelError(ValueError):
    pass


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class SubsetIndices:
    structural: float
    correlative: float

    @property
    def overall(self) -> float:
        return self.structural + self.correlative

    def as_tuple(self) -> tuple:
        return (self.structural, self.correlative, self.overall)


_ABSENT = SubsetIndices(0.0, 0.0)


@dataclass(frozen=True)
class SensitivityReport:
    """Per-subset ``(Sa, Sb, S)`` and per-variable ``(T, R)`` tables."""

    per_subset: Mapping
    per_variable: Mapping
    total_variance: float
    n_vars: int
    measure_id: str = ""
    variable_names: tuple = None
    extra: dict = field(default_factory=dict)

    @property
    def subsets(self) -> list:
        return sorted(self.per_subset, key=subset_key)

    def indices(self, u) -> SubsetIndices:
        """Indices of ``u``; subsets without a component carry zeros."""
        return self.per_subset.get(as_subset(u), _ABSENT)

    def S(self, u) -> float:
        return self.indices(u).overall

    def Sa(self, u) -> float:
        return self.indices(u).structural

    def Sb(self, u) -> float:
        return self.indices(u).correlative

    def T(self, i: int) -> float:
        return self.per_variable[i][0]

    def R(self, i: int) -> float:
        return self.per_variable[i][1]

    def order_shares(self) -> np.ndarray:
        """``[sum_{|u|=k} S_u for k = 1..max]``."""
        top = max((len(u) for u in self.per_subset), default=0)
        out = np.zeros(top)
        for u, s in self.per_subset.items():
            out[len(u) - 1] += s.overall
        return out

    def to_dict(self) -> dict:
        return {
            "total_variance": self.total_variance,
            "measure_id": self.measure_id,
            "n_vars": self.n_vars,
            "variable_names": list(self.variable_names) if self.variable_names else None,
            "subsets": [
                {"subset": list(u), "Sa": s.structural, "Sb": s.correlative, "S": s.overall}
                for u, s in ((u, self.per_subset[u]) for u in self.subsets)
            ],
            "variables": [
                {"variable": i, "T": t, "R": r} for i, (t, r) in sorted(self.per_variable.items())
            ],
            **{k: v for k, v in self.extra.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_text(self, epsilon: float = None, tree: Sequence[float] = None, digits: int = 4) -> str:
        """Aligned table with Subspace, Variables, Sa, Sb, S, T, R (and Tree) columns.

        Subsets with ``|S_u| < epsilon`` are shown as dashes (singletons) or
        omitted (interactions); column totals are over displayed entries.
        """
        names = self.variable_names or tuple(f"x{i + 1}" for i in range(self.n_vars))
        fmt = f"{{:.{digits}f}}"
        header = ["Subspace", "Variables", "Sa", "Sb", "S", "T", "R"] + (["Tree"] if tree is not None else [])
        rows = []
        tot = np.zeros(6)
        singles = {u[0] for u in self.per_subset if len(u) == 1}
        for i in range(self.n_vars):
            u = (i,)
            keep = u in self.per_subset and (epsilon is None or abs(self.S(u)) >= epsilon)
            cells = [label(u), str(tuple(names[j] for j in u))]
            if keep:
                s = self.per_subset[u]
                cells += [fmt.format(v) for v in s.as_tuple()]
                tot[:3] += s.as_tuple()
            else:
                cells += ["-"] * 3
            t, r = self.per_variable.get(i, (0.0, 0.0))
            cells += [fmt.format(t), fmt.format(r)]
            tot[3:5] += (t, r)
            if tree is not None:
                cells.append(fmt.format(tree[i]))
                tot[5] += tree[i]
            if keep or i in singles or epsilon is None or abs(t) >= epsilon:
                rows.append(cells)
        for u in self.subsets:
            if len(u) < 2:
                continue
            s = self.per_subset[u]
            if epsilon is not None and abs(s.overall) < epsilon:
                continue
            cells = [label(u), str(tuple(names[j] for j in u))] + [fmt.format(v) for v in s.as_tuple()]
            cells += ["-", "-"] + (["-"] if tree is not None else [])
            tot[:3] += s.as_tuple()
            rows.append(cells)
        total = ["", "total"] + [fmt.format(v) for v in tot[:5]] + ([fmt.format(tot[5])] if tree is not None else [])
        table = [header] + rows + [total]
        widths = [max(len(r[c]) for r in table) for c in range(len(header))]
        lines = []
        for k, r in enumerate(table):
            lines.append("  ".join(c.ljust(w) if j < 2 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))))
            if k == 0 or k == len(table) - 2:
                lines.append("-" * len(lines[-1]))
        return "\n".join(lines)


def indices_from_covariance(subsets: Sequence, covariance: np.ndarray, total_variance: float, n_vars: int, **kw) -> SensitivityReport:
    """Build a report from a covariance table over ``subsets``."""
    if not total_variance > 0 or not np.isfinite(total_variance):
        raise DegenerateModelError("total variance is zero; sensitivity indices are undefined")
    c = np.asarray(covariance, dtype=float)
    per = {}
    for k, u in enumerate(subsets):
        sa = c[k, k] / total_variance
        sb = (c[k].sum() - c[k, k]) / total_variance
        per[as_subset(u)] = SubsetIndices(float(sa), float(sb))
    totals = np.zeros(n_vars)
    for u, s in per.items():
        for i in u:
            totals[i] += s.overall
    denom = totals.sum()
    rel = totals / denom if denom > 0 else np.zeros(n_vars)
    per_var = {i: (float(totals[i]), float(rel[i])) for i in range(n_vars)}
    return SensitivityReport(per, per_var, float(total_variance), n_vars, **kw)


def scsa(model: HdmrModel, total_variance: float = None) -> SensitivityReport:
    """Structural/correlative indices of ``model`` against ``Var(f)``."""
    var = model.total_variance if total_variance is None else total_variance
    return indices_from_covariance(
        model.subsets,
        model.covariance,
        var,
        model.n_vars,
        measure_id=model.fitting_measure_id,
        variable_names=model.variable_names,
    )


def minimal_order(order_shares: Sequence[float], epsilon: float) -> Union[int, None]:
    """Smallest ``T`` with ``sum_{k<=T} share_k >= 1 - epsilon``, or None."""
    if epsilon < 0:
        raise QueryError("epsilon must be non-negative")
    cum = np.cumsum(np.asarray(order_shares, dtype=float))
    hit = np.nonzero(cum >= 1 - epsilon - 1e-12)[0]
    return int(hit[0]) + 1 if hit.size else None


def level_set_query(source: Union[SensitivityReport, HdmrModel], query: str, epsilon: float):
    """Super level-set selections over variables, subsets or orders.

    ``P_eps`` returns a ``{subset: component}`` map when given a model and
    a list of subsets when given a report.
    """
    if epsilon < 0:
        raise QueryError("epsilon must be non-negative")
    if query not in QUERIES:
        raise QueryError(f"unknown query {query!r}; expected one of {QUERIES}")
    model = source if isinstance(source, HdmrModel) else None
    rep = scsa(source) if model is not None else source
    if query == "T_eps":
        return [i for i in range(rep.n_vars) if rep.T(i) >= epsilon]
    if query == "R_eps":
        return [i for i in range(rep.n_vars) if rep.R(i) >= epsilon]
    if query == "I_eps":
        return [u for u in rep.subsets if len(u) == 1 and rep.S(u) >= epsilon]
    if query == "X_eps":
        return [u for u in rep.subsets if len(u) > 1 and rep.S(u) >= epsilon]
    if query == "P_eps":
        sel = [u for u in rep.subsets if rep.S(u) >= epsilon]
        return {u: model.components[u] for u in sel} if model is not None else sel
    return minimal_order(rep.order_shares(), epsilon)
