"""Desk-scale learners behind one fit / predict contract.

>>> spec = ModelSpec("decision-tree", {"max_depth": 1})
>>> model = fit(spec, Dataset(X, y), rng)        # doctest: +SKIP
>>> predict(model, X_test)                        # doctest: +SKIP
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import container
from ..dataset import Dataset
from ..errors import ConfigError, DataError
from ..optimizers.base import FitnessReport
from ..rng import as_generator, derive_rng
from .base import CLASSIFIERS, PROBABILISTIC, REGRESSORS, ModelSpec, argmax_lowest, check_features, encode_labels
from .boosting import AdaBoost, GradientBoosting, GradientBoostingRegressor
from .linear import ElasticNet, LinearSVM, LogisticRegression
from .mlp import MLP
from .svm import KernelSVM
from .tree import DecisionTree, DecisionTreeRegressor, RandomForest, RandomForestRegressor

CLASSIFIER_TYPES = {
    "logistic-regression": LogisticRegression,
    "linear-svm": LinearSVM,
    "kernel-svm": KernelSVM,
    "decision-tree": DecisionTree,
    "random-forest": RandomForest,
    "adaboost": AdaBoost,
    "gradient-boosting": GradientBoosting,
    "mlp": MLP,
}
REGRESSOR_TYPES = {
    "elastic-net": ElasticNet,
    "random-forest": RandomForestRegressor,
    "gradient-boosting": GradientBoostingRegressor,
    "decision-tree": DecisionTreeRegressor,
}


@dataclass(frozen=True)
class FittedModel:
    family: str
    task: str
    params: dict
    classes: np.ndarray | None
    learner: Any = field(repr=False)
    training_meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.learner.n_features

    @property
    def probabilistic(self) -> bool:
        return self.task == "classification" and self.family in PROBABILISTIC


def _learner_for(spec: ModelSpec):
    table = CLASSIFIER_TYPES if spec.task == "classification" else REGRESSOR_TYPES
    if spec.family not in table:
        raise ConfigError(f"no {spec.task} learner for family {spec.family!r}")
    return table[spec.family](**spec.active_params())


def _train_matrix(train: Dataset) -> np.ndarray:
    if train.n_rows == 0:
        raise DataError("training set is empty")
    return check_features(train.dense(), names=train.feature_names)


def fit(spec: ModelSpec, train: Dataset, rng=None) -> FittedModel:
    """Fit a classifier.  Deterministic given ``rng`` (a Generator or an int seed)."""
    if spec.task != "classification":
        return fit_regressor(spec, train, rng)
    rng = as_generator(rng)
    X = _train_matrix(train)
    classes, codes = encode_labels(train.y)
    learner = _learner_for(spec)
    learner.n_classes = len(classes)
    learner.fit(X, codes, rng)
    meta = {"n_rows": int(X.shape[0]), **learner.meta}
    return FittedModel(spec.family, "classification", spec.active_params(), classes, learner, meta)


def fit_regressor(spec: ModelSpec, train: Dataset, rng=None) -> FittedModel:
    if spec.task != "regression":
        spec = ModelSpec(spec.family, spec.params, "regression")
    rng = as_generator(rng)
    X = _train_matrix(train)
    y = np.asarray(train.y, dtype=float)
    if not np.isfinite(y).all():
        raise DataError("regression target contains non-finite values")
    learner = _learner_for(spec)
    learner.fit(X, y, rng)
    meta = {"n_rows": int(X.shape[0]), **learner.meta}
    return FittedModel(spec.family, "regression", spec.active_params(), None, learner, meta)


def _matrix(model: FittedModel, X) -> np.ndarray:
    if isinstance(X, Dataset):
        X = X.dense()
    elif hasattr(X, "toarray"):
        X = X.toarray()
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return X.reshape(0, model.n_features)
    return check_features(X, model.n_features)


def predict_scores(model: FittedModel, X) -> np.ndarray:
    """Per-class scores (probabilities for probabilistic families); regression gives predictions."""
    X = _matrix(model, X)
    if X.shape[0] == 0:
        width = len(model.classes) if model.task == "classification" else None
        return np.zeros((0, width)) if width else np.zeros(0)
    return model.learner.decision(X)


def predict(model: FittedModel, X) -> np.ndarray:
    S = predict_scores(model, X)
    if model.task == "regression":
        return S
    if S.shape[0] == 0:
        return model.classes[:0]
    return model.classes[argmax_lowest(S)]


# cross-validation ------------------------------------------------------

def stratified_folds(y, k: int, rng) -> np.ndarray:
    """Fold id per row; within every class the fold sizes differ by at most one."""
    if k < 2:
        raise ConfigError("k must be >= 2")
    y = np.asarray(y)
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        rows = np.flatnonzero(y == c)
        if len(rows) < k:
            raise DataError(f"class {c!r} has {len(rows)} members, fewer than k={k}; cannot stratify")
        perm = rng.permutation(rows)
        # rotate the start so small folds are spread across classes
        folds[perm] = (np.arange(len(rows)) + offset) % k
        offset = (offset + len(rows)) % k
    return folds


def cross_validate(spec: ModelSpec, data: Dataset, k: int = 3, metric: str = "accuracy", rng=None) -> FitnessReport:
    from ..evalx import score

    rng = as_generator(rng)
    if spec.task == "classification":
        folds = stratified_folds(data.y, k, rng)
    else:
        if k < 2 or data.n_rows < k:
            raise DataError(f"need k >= 2 and at least k rows (k={k}, n={data.n_rows})")
        folds = rng.permutation(data.n_rows) % k
    seed = int(rng.integers(2**63))
    scores = []
    for i in range(k):
        tr, te = np.flatnonzero(folds != i), np.flatnonzero(folds == i)
        model = fit(spec, data.subset(tr), derive_rng(seed, "fold", i))
        scores.append(score(metric, data.y[te], predict(model, data.subset(te).X)))
    return FitnessReport(float(np.mean(scores)), tuple(scores), n_model_fits=k)


def cv_objective(family: str, data: Dataset, k: int = 3, metric: str = "accuracy",
                 fixed: dict | None = None, task: str = "classification",
                 translate: Callable[[dict], dict] | None = None):
    """Objective ``(candidate, rng) -> FitnessReport`` for the optimizers."""
    fixed = dict(fixed or {})

    def objective(cand, rng):
        params = {k_: v for k_, v in dict(cand).items()}
        params = translate(params) if translate else params
        return cross_validate(ModelSpec(family, {**fixed, **params}, task), data, k, metric, rng)

    return objective


# persistence -----------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def save_model(model: FittedModel, path) -> None:
    meta = {
        "family": model.family,
        "task": model.task,
        "params": _jsonable(model.params),
        "classes": None if model.classes is None else model.classes.tolist(),
        "classes_dtype": None if model.classes is None else model.classes.dtype.str,
        "training_meta": _jsonable(model.training_meta),
        "n_features": model.learner.n_features,
        "n_classes": model.learner.n_classes,
        "learner": _jsonable(model.learner.get_meta()),
    }
    container.save(path, "model", meta, model.learner.get_arrays())


def load_model(path) -> FittedModel:
    _, meta, arrays = container.load(path, expect_kind="model")
    spec = ModelSpec(meta["family"], meta["params"], meta["task"])
    learner = _learner_for(spec)
    learner.n_features = int(meta["n_features"])
    learner.n_classes = int(meta["n_classes"])
    learner.set_meta(meta["learner"])
    learner.set_arrays(arrays)
    classes = None if meta["classes"] is None else np.array(meta["classes"], dtype=np.dtype(meta["classes_dtype"]))
    return FittedModel(meta["family"], meta["task"], meta["params"], classes, learner, meta["training_meta"])


__all__ = [
    "CLASSIFIERS", "REGRESSORS", "PROBABILISTIC", "ModelSpec", "FittedModel", "fit", "fit_regressor",
    "predict", "predict_scores", "cross_validate", "stratified_folds", "cv_objective", "save_model",
    "load_model",
]
