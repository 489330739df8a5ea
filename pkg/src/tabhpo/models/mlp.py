"""Fully connected network with softmax output, trained by Adam."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError
from .base import Learner, one_hot, softmax

ACTIVATIONS = ("relu", "tanh", "elu")


def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activate_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        return 1.0 - a * a
    return np.where(z > 0, 1.0, a + 1.0)


def init_params(sizes, rng, activation="relu"):
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        gain = 2.0 if activation in ("relu", "elu") else 1.0
        params.append(rng.normal(0.0, math.sqrt(gain / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X, activation, masks=None):
    """Returns (probabilities, cache).  ``masks[i]`` multiplies hidden layer i (already rescaled)."""
    h = X
    cache = []
    n_layers = len(params) // 2
    for i in range(n_layers - 1):
        z = h @ params[2 * i] + params[2 * i + 1]
        a = activate(z, activation)
        if masks is not None and masks[i] is not None:
            a = a * masks[i]
        cache.append((h, z, a))
        h = a
    logits = h @ params[-2] + params[-1]
    cache.append((h, None, None))
    return softmax(logits), cache


def loss_and_grads(params, X, Y, activation, masks=None, weight_decay=0.0):
    """Mean cross-entropy (+ L2 on weights) and analytic gradients for every tensor."""
    n = X.shape[0]
    P, cache = forward(params, X, activation, masks)
    loss = -float(np.sum(Y * np.log(np.clip(P, 1e-300, None)))) / n
    grads = [None] * len(params)
    delta = (P - Y) / n
    n_layers = len(params) // 2
    for i in range(n_layers - 1, -1, -1):
        h_in = cache[i][0] if i < n_layers - 1 else cache[-1][0]
        grads[2 * i] = h_in.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            h_prev, z_prev, a_prev = cache[i - 1]
            back = delta @ params[2 * i].T
            if masks is not None and masks[i - 1] is not None:
                back = back * masks[i - 1]
                # a_prev already includes the mask; recover raw activation for tanh/elu derivatives
                raw = activate(z_prev, activation)
            else:
                raw = a_prev
            delta = back * activate_grad(z_prev, raw, activation)
    if weight_decay:
        for i in range(0, len(params), 2):
            loss += 0.5 * weight_decay * float((params[i] * params[i]).sum())
            grads[i] = grads[i] + weight_decay * params[i]
    return loss, grads


def dropout_masks(sizes, n, rate, rng):
    if rate <= 0:
        return None
    keep = 1.0 - rate
    return [(rng.random((n, s)) < keep) / keep for s in sizes[1:-1]]


class MLP(Learner):
    family = "mlp"
    defaults = {"hidden_layers": (64,), "activation": "relu", "dropout": 0.0, "learning_rate": 1e-3,
                "batch_size": 64, "epochs": 20, "weight_decay": 0.0}

    def fit(self, X, codes, rng):
        p = self.params
        if p["activation"] not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {p['activation']!r}; expected one of {ACTIVATIONS}")
        rate = float(p["dropout"])
        if not 0 <= rate < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        hidden = [int(u) for u in p["hidden_layers"]]
        self.n_features = X.shape[1]
        sizes = [X.shape[1], *hidden, self.n_classes]
        params = init_params(sizes, rng, p["activation"])
        m = [np.zeros_like(t) for t in params]
        v = [np.zeros_like(t) for t in params]
        b1, b2, eps = 0.9, 0.999, 1e-8
        lr = float(p["learning_rate"])
        bs = max(1, int(p["batch_size"]))
        Y = one_hot(codes, self.n_classes)
        n = X.shape[0]
        step = 0
        losses = []
        for _ in range(int(p["epochs"])):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                masks = dropout_masks(sizes, len(idx), rate, rng)
                loss, grads = loss_and_grads(params, X[idx], Y[idx], p["activation"], masks, float(p["weight_decay"]))
                total += loss * len(idx)
                step += 1
                for j, gr in enumerate(grads):
                    m[j] = b1 * m[j] + (1 - b1) * gr
                    v[j] = b2 * v[j] + (1 - b2) * gr * gr
                    mh = m[j] / (1 - b1 ** step)
                    vh = v[j] / (1 - b2 ** step)
                    params[j] = params[j] - lr * mh / (np.sqrt(vh) + eps)
            losses.append(total / n)
        self.tensors = params
        self.meta = {"epochs": int(p["epochs"]), "steps": step, "epoch_loss": losses}
        return self

    def decision(self, X):
        return forward(self.tensors, X, self.params["activation"])[0]

    def get_meta(self):
        return {"n_tensors": len(self.tensors)}

    def set_meta(self, meta):
        self._n = int(meta["n_tensors"])

    def get_arrays(self):
        return {f"p{i}": t for i, t in enumerate(self.tensors)}

    def set_arrays(self, a):
        self.tensors = [a[f"p{i}"] for i in range(self._n)]
