"""Linear learners: logistic regression, linear SVM, elastic-net regression."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit, logsumexp

from ..errors import ConfigError
from .base import Learner, class_weights, one_hot, softmax


class LogisticRegression(Learner):
    """Binary (sigmoid) or multinomial (softmax) logistic regression.

    Minimises ``C * sum_i s_i * CE_i + R(W)`` where ``R`` is ``0.5 ||W||^2``
    (l2, solved by L-BFGS), ``||W||_1`` (l1, solved by FISTA) or nothing.
    The intercept is never penalised.
    """

    family = "logistic-regression"
    defaults = {"C": 1.0, "penalty": "l2", "class_weight": None, "max_iter": 500, "tol": 1e-6,
                "fit_intercept": True}

    def _shape(self):
        k = 1 if self.n_classes == 2 else self.n_classes
        return self.n_features, k

    def _loss_grad(self, theta, X, Y, s, C, l2):
        d, k = self._shape()
        W = theta[: d * k].reshape(d, k)
        b = theta[d * k:]
        Z = X @ W + b
        if k == 1:
            z = Z[:, 0]
            y = Y
            # log(1 + e^z) - y z
            nll = -(y * log_expit(z) + (1 - y) * log_expit(-z))
            R = (expit(z) - y)[:, None]
        else:
            lse = logsumexp(Z, axis=1)
            nll = lse - (Z * Y).sum(axis=1)
            R = softmax(Z) - Y
        R = C * s[:, None] * R
        loss = C * float(s @ nll)
        gW = X.T @ R
        gb = R.sum(axis=0) if self.params["fit_intercept"] else np.zeros(k)
        if l2:
            loss += 0.5 * float((W * W).sum())
            gW = gW + W
        return loss, np.concatenate([gW.ravel(), gb])

    def fit(self, X, codes, rng):
        p = self.params
        if p["penalty"] not in ("l1", "l2", "none", None):
            raise ConfigError(f"penalty must be l1, l2 or none, got {p['penalty']!r}")
        if not p["C"] > 0:
            raise ConfigError("C must be positive")
        self.n_features = X.shape[1]
        d, k = self._shape()
        Y = codes.astype(float) if k == 1 else one_hot(codes, self.n_classes)
        s = class_weights(codes, self.n_classes, p["class_weight"])
        theta0 = np.zeros(d * k + k)
        if p["penalty"] == "l1":
            theta, its = self._fista(theta0, X, Y, s)
        else:
            res = minimize(self._loss_grad, theta0, args=(X, Y, s, float(p["C"]), p["penalty"] == "l2"),
                           jac=True, method="L-BFGS-B",
                           options={"maxiter": int(p["max_iter"]), "gtol": float(p["tol"])})
            theta, its = res.x, int(res.nit)
        self.coef = theta[: d * k].reshape(d, k).copy()
        self.intercept = theta[d * k:].copy()
        self.meta = {"iterations": its}
        return self

    def _fista(self, theta, X, Y, s):
        p = self.params
        d, k = self._shape()
        C = float(p["C"])
        Xa = np.hstack([X, np.ones((X.shape[0], 1))])
        curv = 0.25 if k == 1 else 0.5
        lip = C * curv * float(s.max()) * float(np.linalg.norm(Xa, 2)) ** 2
        step = 1.0 / max(lip, 1e-12)
        mask = np.ones_like(theta)
        mask[d * k:] = 0.0  # intercept unpenalised
        x_prev = theta.copy()
        yv = theta.copy()
        t = 1.0
        it = 0
        for it in range(1, int(p["max_iter"]) + 1):
            _, g = self._loss_grad(yv, X, Y, s, C, False)
            z = yv - step * g
            x = np.where(mask > 0, np.sign(z) * np.maximum(np.abs(z) - step, 0.0), z)
            t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            yv = x + ((t - 1) / t_next) * (x - x_prev)
            delta = float(np.max(np.abs(x - x_prev)))
            x_prev, t = x, t_next
            if delta <= p["tol"] * max(1.0, float(np.max(np.abs(x)))):
                break
        return x_prev, it

    def decision(self, X):
        Z = X @ self.coef + self.intercept
        if Z.shape[1] == 1:
            p1 = expit(Z[:, 0])
            return np.column_stack([1.0 - p1, p1])
        return softmax(Z)

    def get_arrays(self):
        return {"coef": self.coef, "intercept": self.intercept}

    def set_arrays(self, a):
        self.coef, self.intercept = a["coef"], a["intercept"]


def dual_cd_hinge(X: np.ndarray, y: np.ndarray, Cs: np.ndarray, rng, max_iter: int, tol: float):
    """Dual coordinate descent for the L1-loss linear SVM with a regularised bias.

    ``y`` in {-1, +1}; ``Cs`` are per-sample box bounds.  Returns ``(w, b, epochs)``.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    Qd = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    epoch = 0
    for epoch in range(1, max_iter + 1):
        pg_max, pg_min = -np.inf, np.inf
        for i in rng.permutation(n):
            xi = Xa[i]
            G = y[i] * float(xi @ w) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(G, 0.0)
            elif a == Cs[i]:
                pg = max(G, 0.0)
            else:
                pg = G
            pg_max, pg_min = max(pg_max, pg), min(pg_min, pg)
            if pg != 0.0:
                a_new = min(max(a - G / Qd[i], 0.0), Cs[i])
                w += (a_new - a) * y[i] * xi
                alpha[i] = a_new
        if pg_max - pg_min <= tol:
            break
    return w[:d].copy(), float(w[d]), epoch


class LinearSVM(Learner):
    """Hinge-loss linear SVM, one-vs-rest for more than two classes."""

    family = "linear-svm"
    defaults = {"C": 1.0, "class_weight": None, "max_iter": 1000, "tol": 0.1}

    def fit(self, X, codes, rng):
        p = self.params
        if not p["C"] > 0:
            raise ConfigError("C must be positive")
        self.n_features = X.shape[1]
        s = class_weights(codes, self.n_classes, p["class_weight"])
        Cs = float(p["C"]) * s
        targets = [1] if self.n_classes == 2 else range(self.n_classes)
        W, B, epochs = [], [], []
        for c in targets:
            y = np.where(codes == c, 1.0, -1.0)
            w, b, e = dual_cd_hinge(X, y, Cs, rng, int(p["max_iter"]), float(p["tol"]))
            W.append(w)
            B.append(b)
            epochs.append(e)
        self.coef = np.array(W).T
        self.intercept = np.array(B)
        self.meta = {"epochs": epochs}
        return self

    def decision(self, X):
        D = X @ self.coef + self.intercept
        if D.shape[1] == 1:
            return np.column_stack([-D[:, 0], D[:, 0]])
        return D

    def get_arrays(self):
        return {"coef": self.coef, "intercept": self.intercept}

    def set_arrays(self, a):
        self.coef, self.intercept = a["coef"], a["intercept"]


class ElasticNet(Learner):
    """Least squares with a mixed L1/L2 penalty, by cyclic coordinate descent.

    Objective ``(1/2n)||y - Xw - b||^2 + reg * (mix * ||w||_1 + (1 - mix)/2 * ||w||^2)``
    with ``mix = elastic_net_param``.  ``reg_param = 0`` is ordinary least squares.
    """

    family = "elastic-net"
    task = "regression"
    defaults = {"reg_param": 0.01, "elastic_net_param": 0.5, "max_iter": 1000, "tol": 1e-8}

    def fit(self, X, y, rng):
        p = self.params
        lam, mix = float(p["reg_param"]), float(p["elastic_net_param"])
        if lam < 0 or not 0 <= mix <= 1:
            raise ConfigError("reg_param must be >= 0 and elastic_net_param in [0, 1]")
        n, d = X.shape
        self.n_features = d
        xm = X.mean(axis=0)
        ym = float(y.mean())
        Xc = X - xm
        yc = y - ym
        if lam == 0.0:
            w = np.linalg.lstsq(Xc, yc, rcond=None)[0] if d else np.zeros(0)
            sweeps = 0
        else:
            w, sweeps = coordinate_descent(Xc, yc, lam * mix, lam * (1 - mix), int(p["max_iter"]), float(p["tol"]))
        self.coef = w
        self.intercept = np.array([ym - float(xm @ w)])
        self.meta = {"sweeps": sweeps}
        return self

    def decision(self, X):
        return X @ self.coef + self.intercept[0]

    def get_arrays(self):
        return {"coef": self.coef, "intercept": self.intercept}

    def set_arrays(self, a):
        self.coef, self.intercept = a["coef"], a["intercept"]


def coordinate_descent(Xc, yc, l1, l2, max_iter=1000, tol=1e-8):
    """Minimise (1/2n)||yc - Xc w||^2 + l1 ||w||_1 + (l2/2) ||w||^2 on centred data."""
    n, d = Xc.shape
    z = (Xc * Xc).sum(axis=0) / n
    w = np.zeros(d)
    r = yc.astype(float).copy()
    sweep = 0
    for sweep in range(1, max_iter + 1):
        biggest = 0.0
        for j in range(d):
            if z[j] == 0.0:
                continue
            xj = Xc[:, j]
            rho = float(xj @ r) / n + z[j] * w[j]
            new = math.copysign(max(abs(rho) - l1, 0.0), rho) / (z[j] + l2)
            if new != w[j]:
                r -= (new - w[j]) * xj
                biggest = max(biggest, abs(new - w[j]))
                w[j] = new
        if biggest <= tol * max(1.0, float(np.max(np.abs(w))) if d else 1.0):
            break
    return w, sweep
