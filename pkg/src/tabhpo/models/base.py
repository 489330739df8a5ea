"""Shared plumbing for the from-scratch learners.

Every learner follows the same small contract: ``fit(X, y, rng)`` on a dense
float matrix, ``decision(X)`` returning per-class scores, and
``get_arrays`` / ``set_arrays`` (plus JSON meta) for persistence.  Label encoding, input
checks and class weighting live here so individual learners stay short.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..errors import ConfigError, DataError

CLASSIFIERS = (
    "logistic-regression", "linear-svm", "kernel-svm", "decision-tree",
    "random-forest", "adaboost", "gradient-boosting", "mlp",
)
REGRESSORS = ("elastic-net", "random-forest", "gradient-boosting", "decision-tree")
TIE_RTOL = 1e-9

PROBABILISTIC = frozenset({"logistic-regression", "decision-tree", "random-forest", "adaboost", "gradient-boosting", "mlp"})


@dataclass(frozen=True)
class ModelSpec:
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    task: str = "classification"

    def __post_init__(self):
        known = CLASSIFIERS if self.task == "classification" else REGRESSORS
        if self.task not in ("classification", "regression"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.family not in known:
            raise ConfigError(f"unknown {self.task} family {self.family!r}; expected one of {known}")

    def active_params(self) -> dict:
        """Params with inactive (conditional) entries dropped."""
        from ..searchspace import INACTIVE
        return {k: v for k, v in dict(self.params).items() if v is not INACTIVE}


def check_features(X, width: int | None = None, names=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if width is None or len(X) == width else X.reshape(-1, 1)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
    if width is not None and X.shape[1] != width and X.shape[0] > 0:
        raise DataError(f"dimension mismatch: model trained on {width} features, got {X.shape[1]}")
    if X.size and not np.isfinite(X).all():
        bad = int(np.flatnonzero(~np.isfinite(X).all(axis=0))[0])
        label = names[bad] if names is not None else f"column {bad}"
        raise DataError(f"non-finite feature values in {label}")
    return X


def encode_labels(y) -> tuple[np.ndarray, np.ndarray]:
    classes, codes = np.unique(np.asarray(y), return_inverse=True)
    if len(classes) < 2:
        raise DataError(f"training set has a single class ({classes.tolist()}); need at least two")
    return classes, codes.astype(np.int64)


def class_weights(codes: np.ndarray, n_classes: int, mode) -> np.ndarray:
    """Per-sample weights; ``balanced`` gives n / (n_classes * n_c)."""
    if mode is None or mode == "none":
        return np.ones(len(codes))
    if mode != "balanced":
        raise ConfigError(f"class_weight must be None or 'balanced', got {mode!r}")
    counts = np.bincount(codes, minlength=n_classes).astype(float)
    per_class = len(codes) / (n_classes * np.maximum(counts, 1.0))
    return per_class[codes]


def argmax_lowest(S: np.ndarray, rtol: float = TIE_RTOL) -> np.ndarray:
    """Row-wise argmax where scores within a relative ``rtol`` of the row
    maximum count as tied; the lowest tied index wins."""
    top = S.max(axis=1, keepdims=True)
    tied = S >= top - rtol * np.abs(top)
    return np.argmax(tied, axis=1)


def one_hot(codes: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(codes), k))
    out[np.arange(len(codes)), codes] = 1.0
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def pick(params: Mapping, defaults: dict, family: str) -> dict:
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {family} parameter(s): {sorted(unknown)}")
    return {**defaults, **params}


class Learner:
    """Base class.  Subclasses set ``family``, ``defaults`` and implement the hooks."""

    family = ""
    defaults: dict = {}
    task = "classification"

    def __init__(self, **params):
        self.params = pick(params, self.defaults, self.family)
        self.n_classes = 0
        self.n_features = 0
        self.meta: dict = {}

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator):
        raise NotImplementedError

    def decision(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def get_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def set_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError

    def get_meta(self) -> dict:
        return {}

    def set_meta(self, meta: dict) -> None:
        pass
