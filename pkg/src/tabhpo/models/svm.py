"""Kernel SVM trained by dual coordinate ascent on a cached Gram matrix."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError
from .base import Learner, class_weights

MAX_ROWS = 5000


def resolve_gamma(gamma, X: np.ndarray) -> float:
    d = X.shape[1]
    if gamma == "scale":
        var = float(X.var())
        return 1.0 / (d * var) if var > 0 else 1.0
    if gamma == "auto":
        return 1.0 / d
    g = float(gamma)
    if g <= 0:
        raise ConfigError("gamma must be positive")
    return g


def kernel_matrix(A, B, kernel: str, gamma: float, degree: int = 3, coef0: float = 0.0) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "poly":
        return (gamma * (A @ B.T) + coef0) ** degree
    if kernel == "rbf":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ConfigError(f"unknown kernel {kernel!r}")


def dual_ascent(K: np.ndarray, y: np.ndarray, Cs: np.ndarray, rng, max_iter: int, tol: float):
    """Box-constrained dual of the hinge SVM with the bias folded into the kernel (K + 1)."""
    n = len(y)
    Q = (K + 1.0) * np.outer(y, y)
    diag = np.maximum(np.diag(Q).copy(), 1e-12)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q alpha - 1
    epoch = 0
    for epoch in range(1, max_iter + 1):
        viol = 0.0
        for i in rng.permutation(n):
            g = grad[i]
            a = alpha[i]
            if (a <= 0.0 and g >= 0.0) or (a >= Cs[i] and g <= 0.0):
                continue
            viol = max(viol, abs(g))
            a_new = min(max(a - g / diag[i], 0.0), Cs[i])
            if a_new != a:
                grad += (a_new - a) * Q[:, i]
                alpha[i] = a_new
        if viol <= tol:
            break
    return alpha, epoch


class KernelSVM(Learner):
    family = "kernel-svm"
    defaults = {"C": 1.0, "kernel": "rbf", "gamma": "scale", "degree": 3, "coef0": 0.0,
                "class_weight": None, "max_iter": 200, "tol": 1e-3}

    def fit(self, X, codes, rng):
        p = self.params
        n = X.shape[0]
        if n > MAX_ROWS:
            raise DataError(f"kernel-svm is limited to {MAX_ROWS} training rows (got {n}); subsample first")
        if not p["C"] > 0:
            raise ConfigError("C must be positive")
        self.n_features = X.shape[1]
        self.gamma_ = resolve_gamma(p["gamma"], X) if p["kernel"] != "linear" else 0.0
        K = kernel_matrix(X, X, p["kernel"], self.gamma_, int(p["degree"]), float(p["coef0"]))
        Cs = float(p["C"]) * class_weights(codes, self.n_classes, p["class_weight"])
        targets = [1] if self.n_classes == 2 else list(range(self.n_classes))
        coefs = np.zeros((n, len(targets)))
        epochs = []
        for j, c in enumerate(targets):
            y = np.where(codes == c, 1.0, -1.0)
            alpha, e = dual_ascent(K, y, Cs, rng, int(p["max_iter"]), float(p["tol"]))
            coefs[:, j] = alpha * y
            epochs.append(e)
        keep = np.flatnonzero(np.any(coefs != 0.0, axis=1))
        self.support = X[keep].copy()
        self.dual_coef = coefs[keep].copy()
        self.meta = {"epochs": epochs, "n_support": int(len(keep))}
        return self

    def decision(self, X):
        p = self.params
        if len(self.support) == 0:
            D = np.zeros((X.shape[0], self.dual_coef.shape[1]))
        else:
            K = kernel_matrix(X, self.support, p["kernel"], self.gamma_, int(p["degree"]), float(p["coef0"]))
            D = (K + 1.0) @ self.dual_coef
        if D.shape[1] == 1:
            return np.column_stack([-D[:, 0], D[:, 0]])
        return D

    def get_meta(self):
        return {"gamma_": self.gamma_}

    def set_meta(self, meta):
        self.gamma_ = float(meta["gamma_"])

    def get_arrays(self):
        return {"support": self.support, "dual_coef": self.dual_coef}

    def set_arrays(self, a):
        self.support, self.dual_coef = a["support"], a["dual_coef"]
