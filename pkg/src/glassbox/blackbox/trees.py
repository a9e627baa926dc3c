"""Least-squares regression trees, gradient boosting and random forests with exposed structure."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..basis import register_element, subset_key


class TreeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Binary tree stored as flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    def __post_init__(self):
        for name, dt in (("feature", np.int64), ("left", np.int64), ("right", np.int64), ("n_samples", np.int64), ("threshold", float), ("value", float)):
            a = np.asarray(getattr(self, name), dtype=dt)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not len({a.size for a in (self.feature, self.threshold, self.left, self.right, self.value, self.n_samples)}) == 1:
            raise TreeError("node arrays must have equal length")
        if self.feature.size == 0:
            raise TreeError("a tree needs at least one node")

    @property
    def subspace(self) -> tuple:
        """Sorted split variables."""
        return tuple(sorted(set(self.feature[self.feature >= 0].tolist())))

    @property
    def depth(self) -> int:
        d = np.zeros(self.feature.size, dtype=int)
        for i in range(self.feature.size):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index of each row."""
        x = np.atleast_2d(x)
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r = rows[inner]
            nd = node[inner]
            go_left = x[r, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, x) -> np.ndarray:
        return self.value[self.apply(np.asarray(x, dtype=float))]

    def scaled(self, c: float) -> "RegressionTree":
        return RegressionTree(self.feature, self.threshold, self.left, self.right, self.value * c, self.n_samples)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        n = len(d["feature"])
        return cls(
            d["feature"],
            d["threshold"],
            d.get("left", [-1] * n),
            d.get("right", [-1] * n),
            d["value"],
            d.get("n_samples", [0] * n),
        )


def _grow(x, y, orders, depth, min_leaf=1, max_features=None, rng=None, scale=1.0):
    """Grow one tree level by level; returns ``(tree, fitted values)``.

    ``orders[j]`` lists the training rows sorted by column ``j``. Splits
    maximize the reduction in squared error; ties go to the lowest
    variable index, then the lowest threshold.
    """
    n, p = x.shape
    feat, thr, left, right, cnt = [-1], [0.0], [-1], [-1], [n]
    node_of = np.zeros(n, dtype=np.int64)  # level-local node id, -1 once in a final leaf
    leaf_of = np.zeros(n, dtype=np.int64)  # global node id
    level_ids = np.array([0])
    tol = 1e-12 * max(1.0, float(np.sum(y**2)))
    for _ in range(depth):
        m = level_ids.size
        act = node_of >= 0
        sums = np.bincount(node_of[act], weights=y[act], minlength=m)
        counts = np.bincount(node_of[act], minlength=m).astype(float)
        best_gain = np.full(m, -np.inf)
        best_feat = np.full(m, -1)
        best_thr = np.zeros(m)
        allowed = None
        if max_features is not None and max_features < p:
            allowed = np.zeros((m, p), dtype=bool)
            for k in range(m):
                allowed[k, rng.choice(p, max_features, replace=False)] = True
        for j in range(p):
            o = orders[j]
            nid = node_of[o]
            s = np.argsort(nid, kind="stable")
            o = o[s]
            nid = nid[s]
            na = nid.size
            xv = x[o, j]
            cs = np.cumsum(y[o])
            starts = np.searchsorted(nid, np.arange(m))
            base = np.where(starts > 0, cs[np.maximum(starts - 1, 0)], 0.0)
            lc = np.arange(na) - starts[nid] + 1.0
            sl = cs - base[nid]
            ts = sums[nid]
            tn = counts[nid]
            rc = tn - lc
            ok = (lc >= min_leaf) & (rc >= min_leaf)
            ok[:-1] &= (nid[1:] == nid[:-1]) & (xv[1:] > xv[:-1])
            ok[-1] = False
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = sl**2 / lc + (ts - sl) ** 2 / rc - ts**2 / tn
            gain = np.where(ok, gain, -np.inf)
            seg_max = np.full(m, -np.inf)
            np.maximum.at(seg_max, nid, gain)
            if allowed is not None:
                seg_max[~allowed[:, j]] = -np.inf
            hit = np.flatnonzero(np.isfinite(gain) & (gain == seg_max[nid]))
            nodes, first = np.unique(nid[hit], return_index=True)
            at = hit[first]
            thr_j = np.zeros(m)
            thr_j[nodes] = 0.5 * (xv[at] + xv[at + 1])
            better = seg_max > best_gain
            best_gain[better] = seg_max[better]
            best_feat[better] = j
            best_thr[better] = thr_j[better]
        split = (best_feat >= 0) & (best_gain > tol)
        # samples of unsplit nodes are final
        stop = act.copy()
        stop[act] = ~split[node_of[act]]
        leaf_of[stop] = level_ids[node_of[stop]]
        node_of[stop] = -1
        if not split.any():
            break
        act = node_of >= 0
        rows = np.flatnonzero(act)
        k_of = node_of[rows]
        go_left = x[rows, best_feat[k_of]] <= best_thr[k_of]
        child = np.full((m, 2), -1, dtype=np.int64)
        next_ids = []
        for k in np.flatnonzero(split):
            g = level_ids[k]
            nl = int(np.count_nonzero(go_left & (k_of == k)))
            a, b = len(feat), len(feat) + 1
            feat += [-1, -1]
            thr += [0.0, 0.0]
            left += [-1, -1]
            right += [-1, -1]
            cnt += [nl, int(counts[k]) - nl]
            feat[g], thr[g], left[g], right[g] = int(best_feat[k]), float(best_thr[k]), a, b
            child[k] = (len(next_ids), len(next_ids) + 1)
            next_ids += [a, b]
        node_of[rows] = np.where(go_left, child[k_of, 0], child[k_of, 1])
        level_ids = np.array(next_ids, dtype=np.int64)
        orders = [o[node_of[o] >= 0] for o in orders]
    act = node_of >= 0
    leaf_of[act] = level_ids[node_of[act]]
    val = np.zeros(len(feat))
    sums = np.bincount(leaf_of, weights=y, minlength=len(feat))
    counts = np.bincount(leaf_of, minlength=len(feat))
    leaves = counts > 0
    val[leaves] = sums[leaves] / counts[leaves] * scale
    tree = RegressionTree(feat, thr, left, right, val, cnt)
    return tree, val[leaf_of]


def _presort(x: np.ndarray) -> list:
    return [np.argsort(x[:, j], kind="stable") for j in range(x.shape[1])]


@register_element("tree_sum")
@dataclass(frozen=True, eq=False)
class TreeSum:
    """Sum of trees as one raw basis element ``g(x) = sum_t tree_t(x)``."""

    trees: tuple
    subset: tuple = None

    def __post_init__(self):
        if self.subset is None:
            u = sorted({i for t in self.trees for i in t.subspace})
            object.__setattr__(self, "subset", tuple(u))

    @property
    def variables(self) -> tuple:
        return self.subset

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for t in self.trees:
            out += t.predict(x)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "subset": list(self.subset), "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeSum":
        return cls(tuple(RegressionTree.from_dict(t) for t in d["trees"]), tuple(d["subset"]))


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    """Additive trees: ``f(x) = base_prediction + sum_t tree_t(x)``."""

    trees: tuple
    depth: int
    base_prediction: float
    n_vars: int
    kind: str = "gbr"
    fitted: np.ndarray = None

    @property
    def subspace_index(self) -> dict:
        """``{subset: [tree indices]}`` in graded order."""
        idx = {}
        for k, t in enumerate(self.trees):
            idx.setdefault(t.subspace, []).append(k)
        return {u: idx[u] for u in sorted(idx, key=subset_key)}

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_vars:
            raise TreeError(f"expected {self.n_vars} columns, got {x.shape[1]}")
        out = np.full(x.shape[0], self.base_prediction)
        for t in self.trees:
            out += t.predict(x)
        return out

    __call__ = predict

    def subspace_functions(self) -> dict:
        """``{subset: TreeSum}`` aggregating the trees of each split subspace."""
        return {u: TreeSum(tuple(self.trees[k] for k in ks), u) for u, ks in self.subspace_index.items()}

    def split_fraction_importance(self) -> np.ndarray:
        """Share of node samples routed through splits on each variable."""
        imp = np.zeros(self.n_vars)
        for t in self.trees:
            inner = t.feature >= 0
            np.add.at(imp, t.feature[inner], t.n_samples[inner])
        total = imp.sum()
        return imp / total if total > 0 else imp

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "depth": self.depth,
            "base_prediction": self.base_prediction,
            "n_vars": self.n_vars,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        trees = tuple(RegressionTree.from_dict(t) for t in d["trees"])
        n_vars = d.get("n_vars")
        if n_vars is None:
            n_vars = 1 + max((int(f) for t in trees for f in t.feature), default=0)
        depth = d.get("depth", max((t.depth for t in trees), default=0))
        return cls(trees, int(depth), float(d.get("base_prediction", 0.0)), int(n_vars), d.get("kind", "external"))

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsemble":
        return cls.from_dict(json.loads(text))


def _check_data(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.size:
        raise TreeError("x and y have different numbers of rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise TreeError("training data must be finite")
    return x, y


def train_gbr(x, y, depth: int = 3, n_trees: int = 100, learning_rate: float = 0.1, seed: int = 0, subsample: float = 1.0, min_leaf: int = 1) -> TreeEnsemble:
    """Least-squares gradient boosting; tree values already include the learning rate.

    A constant response yields the base prediction and no trees.
    """
    if n_trees < 1 or depth < 1:
        raise TreeError("n_trees and depth must be >= 1")
    x, y = _check_data(x, y)
    base = float(y.mean())
    fit = np.full(y.size, base)
    rng = np.random.default_rng(seed)
    orders = _presort(x)
    trees = []
    for _ in range(n_trees):
        r = y - fit
        if subsample < 1.0:
            rows = np.sort(rng.choice(y.size, max(2, int(subsample * y.size)), replace=False))
            xs, rs = x[rows], r[rows]
            tree, _ = _grow(xs, rs, _presort(xs), depth, min_leaf, scale=learning_rate)
            step = tree.predict(x)
        else:
            tree, step = _grow(x, r, orders, depth, min_leaf, scale=learning_rate)
        if tree.feature[0] < 0:
            break
        trees.append(tree)
        fit = fit + step
    return TreeEnsemble(tuple(trees), depth, base, x.shape[1], "gbr", fit)


def train_rf(x, y, depth: int = 6, n_trees: int = 100, seed: int = 0, max_features: int = None, min_leaf: int = 1) -> TreeEnsemble:
    """Bagged trees with per-node random feature subsets; values are pre-divided by ``n_trees``.

    ``max_features`` defaults to ``ceil(n/3)``.
    """
    if n_trees < 1 or depth < 1:
        raise TreeError("n_trees and depth must be >= 1")
    x, y = _check_data(x, y)
    n, p = x.shape
    if np.ptp(y) == 0:
        return TreeEnsemble((), depth, float(y[0]), p, "rf", np.full(n, y[0]))
    mf = max(1, int(np.ceil(p / 3))) if max_features is None else int(max_features)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, n)
        xb, yb = x[rows], y[rows]
        tree, _ = _grow(xb, yb, _presort(xb), depth, min_leaf, mf, rng, scale=1.0 / n_trees)
        trees.append(tree)
    ens = TreeEnsemble(tuple(trees), depth, 0.0, p, "rf")
    return TreeEnsemble(ens.trees, depth, 0.0, p, "rf", ens.predict(x))
