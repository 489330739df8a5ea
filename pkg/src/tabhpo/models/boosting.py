"""AdaBoost (SAMME) and a compact histogram gradient-boosting machine."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from ..errors import ConfigError
from .base import Learner, one_hot, softmax
from .tree import LEAF, TreeArrays, build_tree


class AdaBoost(Learner):
    """Multi-class AdaBoost with shallow CART base learners.

    Boosting halts as soon as a base learner's weighted error reaches the
    chance level ``1 - 1/K``; the first learner is kept even then so the
    ensemble is never empty.
    """

    family = "adaboost"
    defaults = {"n_estimators": 50, "learning_rate": 1.0, "max_depth": 1}

    def fit(self, X, codes, rng):
        p = self.params
        n, K = X.shape[0], self.n_classes
        self.n_features = X.shape[1]
        lr = float(p["learning_rate"])
        if lr <= 0:
            raise ConfigError("learning_rate must be positive")
        w = np.full(n, 1.0 / n)
        self.trees, alphas, errors = [], [], []
        halted = None
        for m in range(int(p["n_estimators"])):
            tree = build_tree(X, codes, w, n_classes=K, max_depth=int(p["max_depth"]), rng=rng)
            miss = tree.predict_value(X).argmax(axis=1) != codes
            err = float(w[miss].sum() / w.sum())
            errors.append(err)
            if err >= 1.0 - 1.0 / K:
                if not self.trees:
                    self.trees.append(tree)
                    alphas.append(1.0)
                halted = m
                break
            a = lr * (math.log((1.0 - err) / max(err, 1e-10)) + math.log(K - 1))
            self.trees.append(tree)
            alphas.append(a)
            if err <= 0.0:
                halted = m
                break
            w = w * np.exp(a * miss)
            w /= w.sum()
        self.alphas = np.array(alphas)
        self.meta = {"rounds": len(self.trees), "errors": errors, "halted_at": halted}
        return self

    def decision(self, X):
        votes = np.zeros((X.shape[0], self.n_classes))
        for a, t in zip(self.alphas, self.trees):
            votes[np.arange(X.shape[0]), t.predict_value(X).argmax(axis=1)] += a
        return votes / self.alphas.sum()

    def get_meta(self):
        return {"n_trees": len(self.trees)}

    def set_meta(self, meta):
        self._n_trees = int(meta["n_trees"])

    def get_arrays(self):
        out = {"alphas": self.alphas}
        for i, t in enumerate(self.trees):
            out.update(t.to_arrays(f"t{i}."))
        return out

    def set_arrays(self, a):
        self.alphas = a["alphas"]
        self.trees = [TreeArrays.from_arrays(a, f"t{i}.") for i in range(self._n_trees)]


# histogram GBM ---------------------------------------------------------

def bin_edges(X: np.ndarray, max_bins: int = 255) -> list[np.ndarray]:
    """Per-feature split thresholds; a feature gets at most ``max_bins`` bins."""
    if not 2 <= max_bins <= 256:
        raise ConfigError("max_bins must lie in [2, 256]")
    edges = []
    for col in X.T:
        uniq = np.unique(col)
        if len(uniq) <= max_bins:
            e = 0.5 * (uniq[:-1] + uniq[1:])
        else:
            q = np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1])
            e = np.unique(q)
        edges.append(e.astype(float))
    return edges


def apply_bins(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.uint8)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, X[:, j], side="left")
    return out


def _soft(G, alpha):
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def leaf_output(G, H, reg_alpha, reg_lambda):
    return -_soft(G, reg_alpha) / (H + reg_lambda)


class _HistTreeBuilder:
    def __init__(self, Xb, nbins, params):
        self.Xb = Xb
        self.F = Xb.shape[1]
        self.B = int(max(nbins.max(), 1))
        self.nbins = nbins
        self.offsets = (np.arange(self.F) * self.B)[None, :]
        self.p = params

    def histogram(self, idx, g, h):
        flat = (self.Xb[idx].astype(np.int64) + self.offsets).ravel()
        size = self.F * self.B
        G = np.bincount(flat, weights=np.repeat(g[idx], self.F), minlength=size).reshape(self.F, self.B)
        H = np.bincount(flat, weights=np.repeat(h[idx], self.F), minlength=size).reshape(self.F, self.B)
        C = np.bincount(flat, minlength=size).reshape(self.F, self.B)
        return G, H, C

    def score(self, G, H):
        return _soft(G, self.p["reg_alpha"]) ** 2 / (H + self.p["reg_lambda"])

    def best_split(self, hist):
        G, H, C = hist
        GL, HL, CL = np.cumsum(G, 1)[:, :-1], np.cumsum(H, 1)[:, :-1], np.cumsum(C, 1)[:, :-1]
        Gt, Ht, Ct = G.sum(1)[:, None], H.sum(1)[:, None], C.sum(1)[:, None]
        GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
        mcs, msh = self.p["min_child_samples"], self.p["min_sum_hessian"]
        ok = (CL >= mcs) & (CR >= mcs) & (HL >= msh) & (HR >= msh)
        ok &= np.arange(self.B - 1)[None, :] < (self.nbins[:, None] - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = self.score(GL, HL) + self.score(GR, HR) - self.score(Gt, Ht)
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        f, b = divmod(k, self.B - 1) if self.B > 1 else (0, 0)
        if self.B <= 1 or not gain[f, b] > 1e-12:
            return None
        return float(gain[f, b]), f, b

    def build(self, rows, g, h):
        """Leaf-wise growth; returns (feature, bin, left, right, leaf G/H sums, leaf rows)."""
        p = self.p
        max_depth = p["max_depth"] if p["max_depth"] and p["max_depth"] > 0 else math.inf
        feat, binv, left, right = [LEAF], [0], [LEAF], [LEAF]
        hist = {0: self.histogram(rows, g, h)}
        members = {0: rows}
        depth = {0: 0}
        cand = {}

        def consider(node):
            if depth[node] < max_depth and len(members[node]) >= 2 * p["min_child_samples"]:
                s = self.best_split(hist[node])
                if s is not None:
                    cand[node] = s

        consider(0)
        n_leaves = 1
        while n_leaves < p["num_leaves"] and cand:
            node = max(cand, key=lambda k: (cand[k][0], -k))
            _, f, b = cand.pop(node)
            idx = members.pop(node)
            go = self.Xb[idx, f] <= b
            li, ri = idx[go], idx[~go]
            ln, rn = len(feat), len(feat) + 1
            feat[node], binv[node], left[node], right[node] = f, b, ln, rn
            feat += [LEAF, LEAF]
            binv += [0, 0]
            left += [LEAF, LEAF]
            right += [LEAF, LEAF]
            parent = hist.pop(node)
            small, big = (ln, rn) if len(li) <= len(ri) else (rn, ln)
            members[ln], members[rn] = li, ri
            hist[small] = self.histogram(members[small], g, h)
            hist[big] = tuple(P - S for P, S in zip(parent, hist[small]))
            depth[ln] = depth[rn] = depth[node] + 1
            consider(ln)
            consider(rn)
            n_leaves += 1
        return feat, binv, left, right, members


class GradientBoosting(Learner):
    """Newton boosting of histogram trees on binary / softmax / squared loss.

    Leaves take ``-soft(G, reg_alpha) / (H + reg_lambda)`` scaled by the
    learning rate.  With early stopping a stratified validation slice is held
    out and the ensemble is truncated to its best round by classification
    error (squared error for regression).
    """

    family = "gradient-boosting"
    defaults = {"n_estimators": 100, "learning_rate": 0.1, "num_leaves": 31, "max_depth": -1,
                "reg_alpha": 0.0, "reg_lambda": 0.0, "early_stopping_rounds": 20,
                "validation_fraction": 0.1, "max_bins": 255, "min_child_samples": 20,
                "min_sum_hessian": 1e-3}

    def _split_validation(self, target, rng):
        p = self.params
        n = len(target)
        frac = float(p["validation_fraction"])
        if not p["early_stopping_rounds"] or frac <= 0:
            return np.arange(n), np.arange(0)
        if self.task == "classification":
            val = []
            for c in range(self.n_classes):
                rows = np.flatnonzero(target == c)
                take = int(round(frac * len(rows)))
                if len(rows) >= 2:
                    take = min(max(take, 1), len(rows) - 1)
                    val.append(rng.permutation(rows)[:take])
            val = np.sort(np.concatenate(val)) if val else np.arange(0)
        else:
            val = np.sort(rng.permutation(n)[: int(round(frac * n))])
        mask = np.ones(n, dtype=bool)
        mask[val] = False
        return np.flatnonzero(mask), val

    def _gradients(self, F, target):
        if self.task == "regression":
            return F[:, 0] - target, np.ones(len(target)), None
        if self.n_classes == 2:
            pr = expit(F[:, 0])
            return pr - target, np.maximum(pr * (1 - pr), 1e-16), None
        P = softmax(F)
        Y = one_hot(target, self.n_classes)
        return P - Y, np.maximum(P * (1 - P), 1e-16), True

    def loss(self, F, target) -> float:
        if self.task == "regression":
            return float(np.mean((F[:, 0] - target) ** 2))
        if self.n_classes == 2:
            z = F[:, 0]
            return float(np.mean(np.logaddexp(0.0, z) - target * z))
        Z = F - F.max(1, keepdims=True)
        return float(np.mean(np.log(np.exp(Z).sum(1)) - Z[np.arange(len(target)), target]))

    def _metric(self, F, target):
        if self.task == "regression":
            return float(np.mean((F[:, 0] - target) ** 2))
        pred = (F[:, 0] > 0).astype(int) if self.n_classes == 2 else F.argmax(1)
        return float(np.mean(pred != target))

    def fit(self, X, target, rng):
        p = self.params
        for key in ("reg_alpha", "reg_lambda"):
            if p[key] < 0:
                raise ConfigError(f"{key} must be >= 0")
        if not p["learning_rate"] > 0 or int(p["num_leaves"]) < 2:
            raise ConfigError("learning_rate must be positive and num_leaves >= 2")
        self.n_features = X.shape[1]
        tr, va = self._split_validation(target, rng)
        Xt, yt = X[tr], target[tr]
        self.edges = bin_edges(Xt, int(p["max_bins"]))
        Xb = apply_bins(Xt, self.edges)
        nbins = np.array([len(e) + 1 for e in self.edges])
        lr = float(p["learning_rate"])
        K = 1 if self.task == "regression" or self.n_classes == 2 else self.n_classes
        if self.task == "regression":
            init = np.array([float(yt.mean())])
        elif K == 1:
            pm = float(np.clip(yt.mean(), 1e-12, 1 - 1e-12))
            init = np.array([math.log(pm / (1 - pm))])
        else:
            freq = np.clip(np.bincount(yt, minlength=K) / len(yt), 1e-12, None)
            init = np.log(freq)
        self.init = init
        F = np.tile(init, (len(tr), 1))
        Fv = np.tile(init, (len(va), 1))
        builder = _HistTreeBuilder(Xb, nbins, {**p, "reg_alpha": float(p["reg_alpha"]),
                                               "reg_lambda": float(p["reg_lambda"])})
        self.trees: list[TreeArrays] = []
        train_loss, val_metric = [self.loss(F, yt)], []
        best_round, best_val = -1, math.inf
        rows = np.arange(len(tr))
        rounds = 0
        for r in range(int(p["n_estimators"])):
            g, h, multi = self._gradients(F, yt)
            for k in range(K):
                gk = g[:, k] if multi else g
                hk = h[:, k] if multi else h
                feat, binv, left, right, members = builder.build(rows, gk, hk)
                values = np.zeros((len(feat), 1))
                thr = np.zeros(len(feat))
                for node, idx in members.items():
                    v = leaf_output(gk[idx].sum(), hk[idx].sum(), builder.p["reg_alpha"], builder.p["reg_lambda"])
                    values[node, 0] = lr * v
                    F[idx, k] += lr * v
                for node, f in enumerate(feat):
                    if f != LEAF:
                        thr[node] = self.edges[f][binv[node]]
                tree = TreeArrays(feat, thr, left, right, values)
                self.trees.append(tree)
                if len(va):
                    Fv[:, k] += tree.predict_value(X[va])[:, 0]
            rounds = r + 1
            train_loss.append(self.loss(F, yt))
            if len(va):
                m = self._metric(Fv, target[va])
                val_metric.append(m)
                if m < best_val:
                    best_val, best_round = m, r
                elif r - best_round >= int(p["early_stopping_rounds"]):
                    break
        if len(va) and best_round >= 0:
            self.trees = self.trees[: (best_round + 1) * K]
        self.K = K
        self.meta = {"rounds": rounds, "best_round": best_round if len(va) else None,
                     "early_stopped": bool(len(va)) and rounds < int(p["n_estimators"]),
                     "train_loss": train_loss, "val_metric": val_metric}
        return self

    def raw_score(self, X):
        F = np.tile(self.init, (X.shape[0], 1)).astype(float)
        for i, t in enumerate(self.trees):
            F[:, i % self.K] += t.predict_value(X)[:, 0]
        return F

    def decision(self, X):
        F = self.raw_score(X)
        if self.task == "regression":
            return F[:, 0]
        if self.K == 1:
            p1 = expit(F[:, 0])
            return np.column_stack([1 - p1, p1])
        return softmax(F)

    def get_meta(self):
        return {"n_trees": len(self.trees), "K": self.K}

    def set_meta(self, meta):
        self._n_trees, self.K = int(meta["n_trees"]), int(meta["K"])

    def get_arrays(self):
        out = {"init": self.init}
        for i, t in enumerate(self.trees):
            out.update(t.to_arrays(f"t{i}."))
        return out

    def set_arrays(self, a):
        self.init = a["init"]
        self.trees = [TreeArrays.from_arrays(a, f"t{i}.") for i in range(self._n_trees)]


class GradientBoostingRegressor(GradientBoosting):
    task = "regression"
