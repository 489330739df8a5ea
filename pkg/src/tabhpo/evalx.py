"""Metrics, confusion matrices and the Top-K weighted-voting ensemble."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .models.base import argmax_lowest

RESULT_SCHEMA_VERSION = 1
RESULT_COLUMNS = ("schema_version", "dataset", "model", "optimizer", "rho", "split",
                  "accuracy", "f1_macro", "mae", "rmse", "r2", "n_fits", "wall_s")


# classification ---------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray
    classes: tuple

    @classmethod
    def from_labels(cls, y_true, y_pred, labels: Sequence | None = None) -> "ConfusionMatrix":
        y_true, y_pred = _pair(y_true, y_pred)
        classes = tuple(np.unique(np.concatenate([y_true, y_pred])).tolist()) if labels is None else tuple(labels)
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        try:
            np.add.at(counts, ([index[t] for t in y_true.tolist()], [index[p] for p in y_pred.tolist()]), 1)
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} not in the declared class list") from None
        return cls(counts, classes)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.n if self.n else math.nan

    def normalized(self) -> np.ndarray:
        """Row-normalised rates; all-zero rows stay zero."""
        rows = self.counts.sum(axis=1, keepdims=True).astype(float)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_rows(self) -> list[list]:
        return [["true\\pred", *self.classes]] + [[c, *map(int, r)] for c, r in zip(self.classes, self.counts)]


def _pair(y_true, y_pred):
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError(f"y_true and y_pred lengths differ ({y_true.shape} vs {y_pred.shape})")
    return y_true, y_pred


def per_class_scores(cm: ConfusionMatrix) -> dict:
    tp = np.diag(cm.counts).astype(float)
    pred = cm.counts.sum(axis=0).astype(float)
    true = cm.counts.sum(axis=1).astype(float)
    prec = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    rec = np.divide(tp, true, out=np.zeros_like(tp), where=true > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    present = (pred + true) > 0
    return {"precision": prec, "recall": rec, "f1": f1, "present": present}


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred)
    if len(y_true) == 0:
        raise DataError("metrics need at least one sample")
    return float(np.mean(y_true == y_pred))


def f1_macro(y_true, y_pred, labels: Sequence | None = None) -> float:
    cm = ConfusionMatrix.from_labels(y_true, y_pred, labels)
    pc = per_class_scores(cm)
    return float(np.mean(pc["f1"][pc["present"]]))


def classification_metrics(y_true, y_pred, labels: Sequence | None = None) -> dict:
    y_true, y_pred = _pair(y_true, y_pred)
    if len(y_true) == 0:
        raise DataError("metrics need at least one sample")
    cm = ConfusionMatrix.from_labels(y_true, y_pred, labels)
    pc = per_class_scores(cm)
    keep = pc["present"]
    return {
        "accuracy": cm.accuracy,
        "f1_macro": float(np.mean(pc["f1"][keep])),
        "per_class": {c: {"precision": float(pc["precision"][i]), "recall": float(pc["recall"][i]),
                          "f1": float(pc["f1"][i])}
                      for i, c in enumerate(cm.classes) if keep[i]},
        "confusion": cm,
    }


# regression -------------------------------------------------------------

def regression_metrics(y_true, y_pred) -> dict:
    """MAE, RMSE and R^2.  A constant target leaves R^2 undefined: ``nan`` with ``r2_defined=False``."""
    y_true, y_pred = _pair(np.asarray(y_true, dtype=float), np.asarray(y_pred, dtype=float))
    if len(y_true) == 0:
        raise DataError("metrics need at least one sample")
    e = y_true - y_pred
    mae = float(np.mean(np.abs(e)))
    rmse = math.sqrt(float(np.mean(e * e)))
    sst = float(np.sum((y_true - y_true.mean()) ** 2))
    defined = len(y_true) >= 2 and sst > 0
    r2 = 1.0 - float(np.sum(e * e)) / sst if defined else math.nan
    return {"mae": mae, "rmse": rmse, "r2": r2, "r2_defined": defined}


_METRICS = {
    "accuracy": accuracy,
    "f1-macro": f1_macro,
    "f1_macro": f1_macro,
    "neg-mae": lambda t, p: -regression_metrics(t, p)["mae"],
    "neg-rmse": lambda t, p: -regression_metrics(t, p)["rmse"],
    "r2": lambda t, p: regression_metrics(t, p)["r2"],
}


def score(metric: str, y_true, y_pred) -> float:
    """Higher-is-better scalar used as optimizer fitness."""
    if metric not in _METRICS:
        raise ConfigError(f"unknown metric {metric!r}; expected one of {sorted(_METRICS)}")
    return float(_METRICS[metric](y_true, y_pred))


# ensemble ---------------------------------------------------------------

WEIGHT_RULES = ("validation-accuracy-proportional", "uniform", "explicit")


@dataclass(frozen=True)
class EnsembleSpec:
    """Members as ``(model, weight)``; weights are normalised on construction."""

    members: tuple
    weight_rule: str = "validation-accuracy-proportional"
    names: tuple = field(default=())

    def __post_init__(self):
        if self.weight_rule not in WEIGHT_RULES:
            raise ConfigError(f"weight_rule must be one of {WEIGHT_RULES}")
        if not self.members:
            raise ConfigError("an ensemble needs at least one member")
        w = np.array([float(wt) for _, wt in self.members])
        if self.weight_rule == "uniform":
            w = np.ones(len(w))
        if (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
            raise ConfigError("ensemble weights must be finite, non-negative and not all zero")
        w = w / w.sum()
        object.__setattr__(self, "members", tuple((m, float(x)) for (m, _), x in zip(self.members, w)))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"member{i}" for i in range(len(self.members))))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members])


def top_k(candidates: Sequence[tuple[Any, float]], k: int, weight_rule: str = "validation-accuracy-proportional",
          names: Sequence[str] | None = None) -> EnsembleSpec:
    """Keep the ``k`` members with the highest validation accuracy (stable on ties)."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i][1])[:k]
    picked = tuple(candidates[i] for i in order)
    nm = tuple(names[i] for i in order) if names is not None else ()
    return EnsembleSpec(picked, weight_rule, nm)


def combine_scores(scores: Sequence[np.ndarray], weights: Sequence[float],
                   probabilistic: Sequence[bool]) -> np.ndarray:
    """Weighted sum of member scores; hard voters contribute one-hot argmax votes."""
    if not scores:
        raise ConfigError("no member scores to combine")
    total = None
    for S, w, prob in zip(scores, weights, probabilistic):
        S = np.asarray(S, dtype=float)
        if not prob:
            hard = np.zeros_like(S)
            hard[np.arange(S.shape[0]), argmax_lowest(S)] = 1.0
            S = hard
        total = w * S if total is None else total + w * S
    return total


def ensemble_scores(spec: EnsembleSpec, X) -> tuple[np.ndarray, np.ndarray]:
    """Returns (classes, combined scores) over the union of member classes."""
    from .models import predict_scores

    width = getattr(X, "shape", (0, 0))[1] if getattr(X, "ndim", 2) == 2 else None
    classes = np.unique(np.concatenate([np.asarray(m.classes) for m, _ in spec.members]))
    col = {c: i for i, c in enumerate(classes.tolist())}
    parts, probs = [], []
    for name, (m, _) in zip(spec.names, spec.members):
        if width is not None and X.shape[0] and m.n_features != width:
            raise DataError(f"ensemble member {name} expects {m.n_features} features, got {width}")
        S = predict_scores(m, X)
        full = np.zeros((S.shape[0], len(classes)))
        full[:, [col[c] for c in np.asarray(m.classes).tolist()]] = S if m.probabilistic else _onehot_argmax(S)
        parts.append(full)
        probs.append(True)
    return classes, combine_scores(parts, spec.weights, probs)


def _onehot_argmax(S):
    out = np.zeros_like(S, dtype=float)
    if S.shape[0]:
        out[np.arange(S.shape[0]), argmax_lowest(S)] = 1.0
    return out


def ensemble_predict(spec: EnsembleSpec, X) -> np.ndarray:
    classes, S = ensemble_scores(spec, X)
    if S.shape[0] == 0:
        return classes[:0]
    return classes[argmax_lowest(S)]


# result tables ------------------------------------------------------------

def result_row(**fields) -> dict:
    unknown = set(fields) - set(RESULT_COLUMNS)
    if unknown:
        raise ConfigError(f"unknown result columns {sorted(unknown)}")
    row = {c: "" for c in RESULT_COLUMNS}
    row["schema_version"] = RESULT_SCHEMA_VERSION
    for k, v in fields.items():
        row[k] = f"{v:.6f}" if isinstance(v, float) and k not in ("rho",) else v
    return row


def write_results(path, rows: Sequence[dict], append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not (append and path.exists())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    if new:
        w.writeheader()
    for r in rows:
        w.writerow(r)
    mode = "w" if new else "a"
    if new:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(buf.getvalue(), encoding="utf-8", newline="")
        os.replace(tmp, path)
    else:
        with open(path, mode, encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def read_results(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
