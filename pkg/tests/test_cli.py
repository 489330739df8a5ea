import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from tabhpo.cli import REPORT_HEADER, main, run_commands
from tabhpo.config import load_config
from tabhpo.errors import ConfigError, DataError
from tabhpo.fixtures import labelled_rows
from tabhpo.loaders import read_svmlight, read_table

RHOS = [0.02, 0.08, 0.15, 0.30, 0.45]


def _write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return str(p)


def _dense(X):
    return X.toarray() if hasattr(X, "toarray") else np.asarray(X)


def _index_file(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row_index"]
    return np.array([int(r[0]) for r in rows[1:]])


# svmlight ---------------------------------------------------------------------

def test_svmlight_single_line(tmp_path):
    p = tmp_path / "a.svm"
    p.write_text("+1 3:0.5\n", encoding="utf-8")
    d = read_svmlight(p)
    assert d.X.shape == (1, 3) and _dense(d.X)[0].tolist() == [0.0, 0.0, 0.5]
    assert d.y.tolist() == [1]


def test_svmlight_empty_file(tmp_path):
    p = tmp_path / "empty.svm"
    p.write_text("", encoding="utf-8")
    d = read_svmlight(p)
    assert d.X.shape[0] == 0


def test_svmlight_fixture_matches_dense_oracle(tmp_path):
    rng = np.random.default_rng(7)
    n, m = 50, 9
    dense = np.where(rng.random((n, m)) < 0.35, np.round(rng.normal(size=(n, m)), 4), 0.0)
    dense[0, m - 1] = 1.25  # pin the width
    labels = rng.choice([-1, 1], n)
    lines = ["# hand-built fixture"]
    for i in range(n):
        toks = ["+1" if labels[i] > 0 else "-1"]
        if i % 7 == 0:
            toks.append(f"qid:{i}")
        toks += [f"{j + 1}:{float(dense[i, j])!r}" for j in range(m) if dense[i, j] != 0]
        tail = "  # trailing comment" if i % 11 == 0 else ""
        lines.append(" ".join(toks) + tail)
    p = tmp_path / "fifty.svm"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    d = read_svmlight(p)
    assert np.array_equal(_dense(d.X), dense)
    assert d.y.tolist() == [(1 if v > 0 else 0) for v in labels]
    wide = read_svmlight(p, n_features=12)
    assert wide.X.shape == (n, 12) and np.array_equal(_dense(wide.X)[:, :m], dense)
    with pytest.raises(DataError, match="exceeds n_features=5"):
        read_svmlight(p, n_features=5)


@pytest.mark.parametrize("bad, needle", [
    ("1 0:1.0", "1-based"),
    ("1 3:1 2:1", "strictly increasing"),
    ("1 2=1", "idx:value"),
    ("1 2:abc", "idx:value"),
    ("1 2:nan", "non-finite"),
    ("maybe 1:1", "bad label"),
])
def test_svmlight_malformed_lines_name_the_line(tmp_path, bad, needle):
    p = tmp_path / "bad.svm"
    p.write_text(f"1 1:1\n-1 2:1\n{bad}\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 3") as info:
        read_svmlight(p)
    assert needle in str(info.value)


def test_ragged_csv(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b,label\n1,2,0\n3,4\n5,6,1\n", encoding="utf-8")
    with pytest.raises(DataError, match="line 3: expected 3 fields, found 2"):
        read_table(p)
    cfg = _write_config(tmp_path, {"dataset": {"path": str(p), "target": "label"}})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "run")]) == 2


# configuration ---------------------------------------------------------------

def test_unknown_key_names_field(tmp_path):
    cfg = _write_config(tmp_path, {"optimizer": {"method": "ga", "budgett": {}}})
    with pytest.raises(ConfigError, match="optimizer.budgett"):
        load_config(cfg)
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "run")]) == 1


def test_bad_enum_and_type(tmp_path):
    with pytest.raises(ConfigError, match="optimizer.method"):
        load_config(_write_config(tmp_path, {"optimizer": {"method": "hillclimb"}}))
    with pytest.raises(ConfigError, match="seed"):
        load_config(_write_config(tmp_path, {"seed": "zero"}))


def test_json_syntax_error_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "seed": 1,\n  "name" "x"\n}\n', encoding="utf-8")
    with pytest.raises(ConfigError, match=r"line 3, column 10"):
        load_config(p)
    assert main(["sample", "--config", str(p)]) == 1


def test_missing_config_and_bad_flags(tmp_path):
    assert main(["sample"]) == 1
    cfg = _write_config(tmp_path, {"dataset": {"generator": "labelled-rows"}})
    assert main(["sample", "--config", cfg, "--jobs", "0"]) == 1
    assert main(["sample", "--config", cfg, "--seed", "-3"]) == 1


# subcommands ---------------------------------------------------------------

def _hamilton(counts, total):
    # exact-arithmetic oracle, leftovers to the largest remainders then the lowest index
    n = sum(counts)
    quotas = [Fraction(c * total, n) for c in counts]
    seats = [int(q) for q in quotas]
    order = sorted(range(len(counts)), key=lambda i: (-(quotas[i] - seats[i]), i))
    for i in order[: total - sum(seats)]:
        seats[i] += 1
    return seats


def test_sample_writes_nested_index_files(tmp_path):
    cfg = {"dataset": {"generator": "labelled-rows", "generator_args": {"n_rows": 10000}},
           "sampling": {"rhos": RHOS}}
    out = run_commands(cfg, tmp_path / "run", ["sample"])
    y = labelled_rows(10000).y
    counts = [int((y == c).sum()) for c in (0, 1)]
    prev = None
    for rho in RHOS:
        idx = _index_file(out / f"samples/rho_{rho:g}.csv")
        total = int(Fraction(rho).limit_denominator(1000) * 10000)
        assert len(idx) == total
        assert [int((y[idx] == c).sum()) for c in (0, 1)] == _hamilton(counts, total)
        assert len(set(idx.tolist())) == len(idx)
        if prev is not None:
            assert set(prev.tolist()) <= set(idx.tolist())
        prev = idx
    summary = json.loads((out / "samples/summary.json").read_text())
    assert summary["nested"] is True and summary["sizes"]["0.02"] == 200


SVM_CFG = {
    "dataset": {"generator": "epsilon-mini", "generator_args": {"n_rows": 150, "n_cols": 6}},
    "sampling": {"rhos": [0.5]},
    "input": {"source": "raw", "rho": 0.5},
    "model": {"family": "kernel-svm", "space": "svm-grid", "fixed": {"max_iter": 20}},
    "optimizer": {"method": "grid", "cv_folds": 3},
}


def test_optimize_svm_grid_history(tmp_path):
    out = run_commands(SVM_CFG, tmp_path / "run", ["sample", "optimize"])
    with open(out / "optimize/history.csv", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 366
    best = json.loads((out / "optimize/best.json").read_text())
    assert best["n_trials"] == 366 and best["n_fits"] == 1098
    assert 0.0 <= best["fitness"] <= 1.0


def test_report_with_no_results(tmp_path):
    out = tmp_path / "run"
    assert main(["report", "--out", str(out), "--results"]) == 0
    assert (out / "report.md").read_text(encoding="utf-8") == REPORT_HEADER


def test_missing_artifact_names_producer(tmp_path, capfd):
    path = _write_config(tmp_path, SVM_CFG)
    code = main(["optimize", "--config", path, "--out", str(tmp_path / "run")])
    assert code == 1
    text = capfd.readouterr().err
    assert "MissingArtifact" in text and "samples/rho_0.5.csv" in text and "sample" in text


SMALL_CHAIN = {
    "name": "tiny",
    "dataset": {"generator": "epsilon-mini", "generator_args": {"n_rows": 200, "n_cols": 8}},
    "sampling": {"rhos": [0.3, 0.6]},
    "pca": {"variance": 0.9, "fit_on": 0.6, "standardize": "before"},
    "input": {"source": "pca", "rho": 0.3},
    "model": {"family": "logistic-regression", "space": "logistic-regression"},
    "optimizer": {"method": "ga", "budget": {"pop_size": 6, "generations": 2}, "cv_folds": 3},
}
CHAIN = ["sample", "pca", "optimize", "train", "evaluate"]


def test_each_artifact_in_exactly_one_manifest(tmp_path):
    out = run_commands(SMALL_CHAIN, tmp_path / "run", CHAIN)
    owners: dict = {}
    for cmd in CHAIN:
        m = json.loads((out / f"manifests/{cmd}.json").read_text())
        assert {"command", "config_hash", "tool_version", "seed", "inputs", "artifacts", "timings"} <= set(m)
        assert m["command"] == cmd
        for art in m["artifacts"]:
            rel = art["path"] if isinstance(art, dict) else art
            owners.setdefault(rel, []).append(cmd)
    produced = {p.relative_to(out).as_posix() for p in out.rglob("*")
                if p.is_file() and not p.relative_to(out).as_posix().startswith("manifests/")
                and p.name != "config.json" and not p.name.endswith(".log")}
    assert produced == set(owners)
    assert all(len(v) == 1 for v in owners.values())


def test_end_to_end_is_deterministic(tmp_path):
    a = run_commands(SMALL_CHAIN, tmp_path / "a", CHAIN)
    b = run_commands(SMALL_CHAIN, tmp_path / "b", CHAIN, jobs=2)
    ra, rb = sorted((a / "results").glob("*.csv")), sorted((b / "results").glob("*.csv"))
    assert ra and [p.name for p in ra] == [p.name for p in rb]
    for x, y in zip(ra, rb):
        assert x.read_bytes() == y.read_bytes()
    # everything but the wall-clock column must match
    ha, hb = (list(csv.reader((d / "optimize/history.csv").read_text().splitlines())) for d in (a, b))
    assert ha[0][-1] == "wall_ms"
    assert [r[:-1] for r in ha] == [r[:-1] for r in hb]
