"""Ready-made search spaces for each model family."""

from __future__ import annotations

from .searchspace import ParamDim, SearchSpace, ValidityRule

SVM_C = (0.01, 0.1, 1.0, 5.0, 10.0, 20.0)
SVM_GAMMA = ("scale", "auto", 1e-4, 1e-3, 1e-2, 1e-1)
SVM_DEGREE = (2, 3, 4)
SVM_COEF0 = (0.0, 0.1, 0.5)

MLP_TOPOLOGIES = (
    (64,), (128,), (256,), (128, 64), (256, 128), (512, 128), (256, 128, 64), (1024, 256, 128),
)


def svm_grid() -> SearchSpace:
    """Kernel SVM grid: 6 linear + 36 rbf + 324 poly = 366 candidates."""
    return SearchSpace(
        [
            ParamDim.categorical("kernel", ("linear", "poly", "rbf")),
            ParamDim.categorical("C", SVM_C),
            ParamDim.categorical("gamma", SVM_GAMMA),
            ParamDim.categorical("degree", SVM_DEGREE),
            ParamDim.categorical("coef0", SVM_COEF0),
        ],
        [
            ValidityRule("kernel", "rbf", frozenset({"gamma"})),
            ValidityRule("kernel", "poly", frozenset({"gamma", "degree", "coef0"})),
        ],
    )


def mlp_genome(topologies=MLP_TOPOLOGIES) -> SearchSpace:
    """Five genes: topology, dropout, learning rate, activation, batch size."""
    return SearchSpace([
        ParamDim.categorical("hidden_layers", topologies),
        ParamDim.uniform("dropout", 0.0, 0.7),
        ParamDim.loguniform("learning_rate", 1e-5, 1e-1),
        ParamDim.categorical("activation", ("relu", "tanh", "elu")),
        ParamDim.integer("batch_size", 16, 512),
    ])


def gbm_space() -> SearchSpace:
    return SearchSpace([
        ParamDim.integer("n_estimators", 50, 120),
        ParamDim.loguniform("learning_rate", 1e-5, 5e-1),
        ParamDim.integer("num_leaves", 20, 300),
        ParamDim.integer("max_depth", 2, 10),
        ParamDim.uniform("reg_alpha", 0.0, 1.0),
        ParamDim.uniform("reg_lambda", 0.0, 1.0),
    ])


def logistic_space() -> SearchSpace:
    return SearchSpace([
        ParamDim.loguniform("C", 1e-3, 1e2, grid=(0.001, 0.01, 0.1, 1.0, 10.0, 100.0)),
        ParamDim.categorical("penalty", ("l2", "l1")),
        ParamDim.categorical("class_weight", ("none", "balanced")),
    ])


def linear_svm_space() -> SearchSpace:
    return SearchSpace([
        ParamDim.loguniform("C", 1e-2, 2e1, grid=SVM_C),
        ParamDim.categorical("class_weight", ("none", "balanced"), grid=("none",)),
    ])


def tree_space() -> SearchSpace:
    return SearchSpace([
        ParamDim.integer("max_depth", 1, 20, grid=(2, 3, 5, 8, 12)),
        ParamDim.integer("min_samples_leaf", 1, 20, grid=(1, 5, 10)),
        ParamDim.categorical("criterion", ("gini", "entropy")),
    ])


def forest_space() -> SearchSpace:
    return SearchSpace([
        ParamDim.integer("n_estimators", 10, 200, grid=(25, 50, 100)),
        ParamDim.integer("max_depth", 2, 20, grid=(4, 8, 16)),
        ParamDim.categorical("max_features", ("sqrt", "log2", "all")),
    ])


def adaboost_space() -> SearchSpace:
    return SearchSpace([
        ParamDim.integer("n_estimators", 10, 200, grid=(25, 50, 100)),
        ParamDim.loguniform("learning_rate", 1e-3, 2.0, grid=(0.01, 0.1, 0.5, 1.0)),
    ])


DEFAULT_SPACES = {
    "kernel-svm": svm_grid,
    "linear-svm": linear_svm_space,
    "logistic-regression": logistic_space,
    "decision-tree": tree_space,
    "random-forest": forest_space,
    "adaboost": adaboost_space,
    "gradient-boosting": gbm_space,
    "mlp": mlp_genome,
}


def default_space(family: str) -> SearchSpace:
    try:
        return DEFAULT_SPACES[family]()
    except KeyError:
        raise KeyError(f"no default search space for family {family!r}") from None
