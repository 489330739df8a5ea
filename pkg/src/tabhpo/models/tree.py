"""CART decision trees and random forests (classification and regression)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from ..rng import derive_rng
from .base import Learner

LEAF = -1


def n_split_features(max_features, d: int) -> int:
    if max_features is None or max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    if isinstance(max_features, float):
        if not 0 < max_features <= 1:
            raise ConfigError("fractional max_features must lie in (0, 1]")
        return max(1, int(max_features * d))
    m = int(max_features)
    if m < 1:
        raise ConfigError("max_features must be >= 1")
    return min(m, d)


class TreeArrays:
    """Flat node arrays; children are node indices, ``LEAF`` marks leaves."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] != LEAF:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.left[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.left[node[active]] != LEAF]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_arrays(self, prefix: str = "") -> dict:
        return {prefix + k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_arrays(cls, a: dict, prefix: str = "") -> "TreeArrays":
        return cls(*(a[prefix + k] for k in ("feature", "threshold", "left", "right", "value")))


def _class_impurity(counts: np.ndarray, totals: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity of each row of weighted class counts."""
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals[:, None]
        if criterion == "gini":
            imp = 1.0 - (p * p).sum(axis=1)
        else:
            imp = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)).sum(axis=1)
    return np.where(totals > 0, imp, 0.0)


def build_tree(X: np.ndarray, target: np.ndarray, weight: np.ndarray, *, n_classes: int = 0,
               criterion: str = "gini", max_depth=None, min_samples_split: int = 2,
               min_samples_leaf: int = 1, max_features=None, rng=None) -> TreeArrays:
    """Grow a CART tree depth-first.

    ``n_classes > 0`` means classification with integer ``target`` codes and
    leaf values holding class probabilities; ``n_classes == 0`` grows a
    regression tree on squared error with leaf means.
    """
    n, d = X.shape
    clf = n_classes > 0
    if not clf:
        criterion = "mse"
    elif criterion not in ("gini", "entropy"):
        raise ConfigError(f"criterion must be gini or entropy, got {criterion!r}")
    m = n_split_features(max_features, d)
    depth_cap = math.inf if max_depth is None else int(max_depth)
    if clf:
        W1 = np.zeros((n, n_classes))
        W1[np.arange(n), target] = weight
    feats, thrs, lefts, rights, vals = [], [], [], [], []

    def leaf_value(idx):
        if clf:
            c = W1[idx].sum(axis=0)
            s = c.sum()
            return c / s if s > 0 else np.full(n_classes, 1.0 / n_classes)
        w = weight[idx]
        sw = w.sum()
        return np.array([float(w @ target[idx]) / sw if sw > 0 else float(target[idx].mean())])

    def node_cost(idx):
        if clf:
            c = W1[idx].sum(axis=0)
            s = c.sum()
            return float(s * _class_impurity(c[None, :], np.array([s]), criterion)[0])
        w, t = weight[idx], target[idx]
        sw = w.sum()
        return float(w @ (t * t) - (w @ t) ** 2 / sw) if sw > 0 else 0.0

    def best_split(idx):
        cnt = len(idx)
        fset = range(d) if m == d else rng.permutation(d)[:m]
        parent = node_cost(idx)
        if parent <= 1e-12 * max(1.0, float(weight[idx].sum())):
            return None  # pure node
        # zero-gain splits are allowed (XOR-like targets need one at the root)
        best = (parent * (1 + 1e-12) + 1e-12, None)
        lo, hi = min_samples_leaf - 1, cnt - min_samples_leaf - 1
        if hi < lo:
            return None
        for f in fset:
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            xs_s = xs[order]
            valid = np.flatnonzero(xs_s[:-1] < xs_s[1:])
            valid = valid[(valid >= lo) & (valid <= hi)]
            if valid.size == 0:
                continue
            if clf:
                cum = np.cumsum(W1[idx][order], axis=0)
                left = cum[valid]
                right = cum[-1] - left
                tl, tr = left.sum(1), right.sum(1)
                cost = tl * _class_impurity(left, tl, criterion) + tr * _class_impurity(right, tr, criterion)
            else:
                w = weight[idx][order]
                t = target[idx][order]
                cw, cwy, cwy2 = np.cumsum(w), np.cumsum(w * t), np.cumsum(w * t * t)
                lw, ly, ly2 = cw[valid], cwy[valid], cwy2[valid]
                rw, ry, ry2 = cw[-1] - lw, cwy[-1] - ly, cwy2[-1] - ly2
                with np.errstate(divide="ignore", invalid="ignore"):
                    cost = np.where(lw > 0, ly2 - ly * ly / lw, 0.0) + np.where(rw > 0, ry2 - ry * ry / rw, 0.0)
            j = int(np.argmin(cost))
            if cost[j] < best[0]:
                pos = valid[j]
                a, b = xs_s[pos], xs_s[pos + 1]
                thr = 0.5 * (a + b)
                if not a <= thr < b:
                    thr = a
                best = (float(cost[j]), (int(f), float(thr)))
        return best[1]

    def new_node(idx):
        feats.append(LEAF)
        thrs.append(0.0)
        lefts.append(LEAF)
        rights.append(LEAF)
        vals.append(leaf_value(idx))
        return len(feats) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= depth_cap or len(idx) < max(2, min_samples_split):
            continue
        if clf and np.count_nonzero(vals[node]) <= 1:
            continue
        split = best_split(idx)
        if split is None:
            continue
        f, thr = split
        go = X[idx, f] <= thr
        li, ri = idx[go], idx[~go]
        feats[node], thrs[node] = f, thr
        lnode = new_node(li)
        rnode = new_node(ri)
        lefts[node], rights[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    width = n_classes if clf else 1
    return TreeArrays(feats, thrs, lefts, rights, np.array(vals).reshape(-1, width))


_TREE_DEFAULTS = {"max_depth": None, "min_samples_split": 2, "min_samples_leaf": 1,
                  "criterion": "gini", "max_features": None}


class DecisionTree(Learner):
    family = "decision-tree"
    defaults = dict(_TREE_DEFAULTS)

    def fit(self, X, target, rng, sample_weight=None):
        self.n_features = X.shape[1]
        w = np.ones(len(target)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        p = self.params
        self.tree = build_tree(X, target, w, n_classes=self.n_classes if self.task == "classification" else 0,
                               criterion=p["criterion"], max_depth=p["max_depth"],
                               min_samples_split=int(p["min_samples_split"]),
                               min_samples_leaf=int(p["min_samples_leaf"]),
                               max_features=p["max_features"], rng=rng)
        self.meta = {"n_nodes": self.tree.n_nodes, "depth": self.tree.depth()}
        return self

    def decision(self, X):
        v = self.tree.predict_value(X)
        return v if self.task == "classification" else v[:, 0]

    def get_arrays(self):
        return self.tree.to_arrays()

    def set_arrays(self, a):
        self.tree = TreeArrays.from_arrays(a)


class DecisionTreeRegressor(DecisionTree):
    task = "regression"


class RandomForest(Learner):
    """Bagged CART trees; averages leaf probabilities (or means for regression).

    Tree ``i`` draws its bootstrap and feature subsets from the child stream
    ``(seed, "tree", i)``; with one tree, no bootstrap and all features the
    forest is exactly the single decision tree.
    """

    family = "random-forest"
    defaults = {**_TREE_DEFAULTS, "n_estimators": 100, "max_features": "sqrt", "bootstrap": True}

    def fit(self, X, target, rng):
        p = self.params
        n = X.shape[0]
        self.n_features = X.shape[1]
        seed = int(rng.integers(2**63))
        clf = self.task == "classification"
        self.trees = []
        for i in range(int(p["n_estimators"])):
            trng = derive_rng(seed, "tree", i)
            if p["bootstrap"]:
                w = np.bincount(trng.integers(n, size=n), minlength=n).astype(float)
                rows = np.flatnonzero(w)
                Xi, ti, wi = X[rows], target[rows], w[rows]
            else:
                Xi, ti, wi = X, target, np.ones(n)
            self.trees.append(build_tree(
                Xi, ti, wi, n_classes=self.n_classes if clf else 0, criterion=p["criterion"],
                max_depth=p["max_depth"], min_samples_split=int(p["min_samples_split"]),
                min_samples_leaf=int(p["min_samples_leaf"]), max_features=p["max_features"], rng=trng))
        self.meta = {"n_trees": len(self.trees)}
        return self

    def decision(self, X):
        acc = self.trees[0].predict_value(X).copy()
        for t in self.trees[1:]:
            acc += t.predict_value(X)
        acc /= len(self.trees)
        return acc if self.task == "classification" else acc[:, 0]

    def get_meta(self):
        return {"n_trees": len(self.trees)}

    def set_meta(self, meta):
        self._n_trees = int(meta["n_trees"])

    def get_arrays(self):
        out = {}
        for i, t in enumerate(self.trees):
            out.update(t.to_arrays(f"t{i}."))
        return out

    def set_arrays(self, a):
        self.trees = [TreeArrays.from_arrays(a, f"t{i}.") for i in range(self._n_trees)]


class RandomForestRegressor(RandomForest):
    task = "regression"
