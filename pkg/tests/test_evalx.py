import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabhpo.dataset import Dataset
from tabhpo.errors import ConfigError, DataError
from tabhpo.evalx import (
    RESULT_COLUMNS,
    ConfusionMatrix,
    EnsembleSpec,
    accuracy,
    classification_metrics,
    combine_scores,
    ensemble_predict,
    f1_macro,
    read_results,
    regression_metrics,
    result_row,
    score,
    top_k,
    write_results,
)
from tabhpo.models import ModelSpec, fit, predict
from tabhpo.models.base import argmax_lowest


def test_perfect_and_majority():
    y = np.array([0, 1, 1, 0, 2])
    assert accuracy(y, y) == 1.0 and f1_macro(y, y) == 1.0
    y = np.array([0] * 90 + [1] * 10)
    pred = np.zeros(100, dtype=int)
    assert accuracy(y, pred) == pytest.approx(0.9)
    assert f1_macro(y, pred) == pytest.approx((2 * 0.9 / 1.9) / 2, abs=1e-12)
    assert f1_macro(y, pred) == pytest.approx(0.4737, abs=1e-4)


def test_macro_f1_excludes_absent_classes():
    # class 2 is declared but appears in neither vector
    a = f1_macro([0, 1, 1], [0, 1, 0], labels=[0, 1, 2])
    b = f1_macro([0, 1, 1], [0, 1, 0])
    assert a == b


def test_confusion_readout():
    cm = ConfusionMatrix(np.array([[8933, 1067], [1652, 8348]]), (0, 1))
    rows = cm.normalized()
    assert np.allclose(rows, [[0.8933, 0.1067], [0.1652, 0.8348]])
    assert [round(100 * rows[i, i], 2) for i in range(2)] == [89.33, 83.48]
    empty = ConfusionMatrix(np.zeros((2, 2), dtype=int), (0, 1))
    assert np.all(empty.normalized() == 0)


def test_confusion_from_labels():
    cm = ConfusionMatrix.from_labels(["a", "b", "b", "c"], ["a", "c", "b", "c"])
    assert cm.classes == ("a", "b", "c")
    assert cm.counts.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]
    assert cm.to_rows()[0] == ["true\\pred", "a", "b", "c"]
    with pytest.raises(DataError, match="not in the declared"):
        ConfusionMatrix.from_labels([0, 5], [0, 0], labels=[0, 1])


def test_metric_errors():
    with pytest.raises(DataError, match="lengths differ"):
        accuracy([0, 1], [0])
    with pytest.raises(DataError):
        regression_metrics([], [])
    with pytest.raises(ConfigError, match="unknown metric"):
        score("auc", [0], [0])


def test_regression_metrics():
    y = np.array([3.0, -1.0, 2.5, 7.0])
    assert regression_metrics(y, y) == {"mae": 0.0, "rmse": 0.0, "r2": 1.0, "r2_defined": True}
    m = regression_metrics(y, np.full(4, y.mean()))
    assert m["r2"] == pytest.approx(0.0, abs=1e-15)
    flat = regression_metrics([2.0, 2.0], [1.0, 3.0])
    assert math.isnan(flat["r2"]) and not flat["r2_defined"]
    rmse_only = regression_metrics([0.0, 0.0, 0.0, 4.0], [0.0] * 4)
    assert rmse_only["mae"] == 1.0 and rmse_only["rmse"] == 2.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30))
def test_rmse_dominates_mae(pairs):
    t, p = map(np.array, zip(*pairs))
    m = regression_metrics(t, p)
    assert m["rmse"] >= m["mae"] - 1e-9


def test_classification_metrics_bundle():
    out = classification_metrics([0, 0, 1, 1], [0, 1, 1, 1])
    assert out["accuracy"] == 0.75
    assert out["per_class"][1]["precision"] == pytest.approx(2 / 3)
    assert out["per_class"][0]["recall"] == 0.5
    assert out["f1_macro"] == pytest.approx(np.mean([2 / 3, 0.8]))
    assert score("f1-macro", [0, 0, 1, 1], [0, 1, 1, 1]) == out["f1_macro"]


# voting -------------------------------------------------------------------

def _votes(labels, k=3):
    S = np.zeros((1, k))
    S[0, labels] = 1.0
    return S


def test_hard_vote_weights():
    S = combine_scores([_votes(0, 2), _votes(1, 2)], [0.6, 0.4], [False, False])
    assert np.argmax(S) == 0
    S = combine_scores([_votes(0), _votes(2), _votes(2)], [0.4, 0.3, 0.3], [False] * 3)
    assert np.argmax(S) == 2


def test_three_voter_enumeration():
    w = np.array([0.4, 0.3, 0.3])
    for pattern in product(range(3), repeat=3):
        S = combine_scores([_votes(v) for v in pattern], w, [False] * 3)
        # oracle: tally weight per label, ties to the lowest label
        tally = np.zeros(3)
        for v, wt in zip(pattern, w):
            tally[v] += wt
        expected = min(c for c in range(3) if np.isclose(tally[c], tally.max()))
        assert argmax_lowest(S)[0] == expected


def _members():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(-1, 1, (60, 2)), rng.normal(1, 1, (60, 2))]
    y = np.repeat([0, 1], 60)
    data = Dataset(X, y)
    lr = fit(ModelSpec("logistic-regression"), data, 0)
    svm = fit(ModelSpec("linear-svm"), data, 0)
    tree = fit(ModelSpec("decision-tree", {"max_depth": 2}), data, 0)
    return X, y, [lr, svm, tree]


def test_identical_members_equal_member():
    X, _, (lr, svm, _) = _members()
    for m in (lr, svm):
        spec = EnsembleSpec(((m, 0.2), (m, 0.5), (m, 0.3)))
        assert np.array_equal(ensemble_predict(spec, X), predict(m, X))


def test_ensemble_weights_and_validation():
    X, y, models = _members()
    spec = top_k([(m, a) for m, a in zip(models, (0.9, 0.95, 0.7))], 2, names=["lr", "svm", "tree"])
    assert spec.names == ("svm", "lr")
    assert spec.weights == pytest.approx([0.95 / 1.85, 0.9 / 1.85])
    uni = EnsembleSpec(spec.members, "uniform")
    assert uni.weights.tolist() == [0.5, 0.5]
    assert accuracy(y, ensemble_predict(spec, X)) >= 0.8
    with pytest.raises(ConfigError):
        EnsembleSpec(())
    with pytest.raises(ConfigError):
        EnsembleSpec(((models[0], -1.0),))
    with pytest.raises(ConfigError):
        EnsembleSpec(((models[0], 1.0),), "majority")
    with pytest.raises(DataError, match="lr expects 2 features"):
        ensemble_predict(EnsembleSpec(((models[0], 1.0),), names=("lr",)), np.zeros((3, 5)))


# result tables ----------------------------------------------------------------

def test_results_round_trip(tmp_path):
    rows = [result_row(dataset="epsilon", model="LR", optimizer="AGA", rho=0.15, split="test", accuracy=0.9123456789),
            result_row(dataset="epsilon", model="SVM", optimizer="Grid", rho=0.08, split="train", accuracy=1.0)]
    write_results(tmp_path / "r.csv", rows[:1])
    write_results(tmp_path / "r.csv", rows[1:], append=True)
    back = read_results(tmp_path / "r.csv")
    assert tuple(back[0]) == RESULT_COLUMNS
    assert back[0]["accuracy"] == "0.912346" and back[1]["model"] == "SVM"
    assert back[0]["rho"] == "0.15"
    with pytest.raises(ConfigError):
        result_row(colour="red")
