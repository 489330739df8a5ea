"""Structured-domain protocol on the synthetic epsilon-mini table.

Every model gets its own stratified subsample and search strategy:

    kernel SVM / grid (8%), logistic regression / AGA (15%), MLP / GA (45%),
    gradient boosting / TPE (30%), AdaBoost / SA (2%)

plus a depth-3 decision tree baseline.  All runs share one frozen PCA fitted
on the 45% sample.  Results land in ``<out>/<model>/results/results.csv``
and ``<out>/report.md``; rerunning with the same seed reproduces the result
files byte for byte.
"""

import argparse
import copy
from pathlib import Path

from tabhpo.cli import main as tabhpo_main
from tabhpo.cli import run_commands

CHAIN = ("sample", "pca", "optimize", "train", "evaluate")

BASE = {
    "name": "epsilon-mini",
    "dataset": {"generator": "epsilon-mini", "generator_args": {"n_rows": 2000, "n_cols": 500, "margin": 1.0}},
    "sampling": {"rhos": [0.02, 0.08, 0.15, 0.30, 0.45]},
    "pca": {"variance": 0.95, "fit_on": 0.45, "standardize": "before"},
    "split": {"train_fraction": 0.8},
}

RUNS = {
    "svm": ({"family": "kernel-svm", "space": "svm-grid", "fixed": {"max_iter": 100}},
            {"method": "grid", "cv_folds": 3}, 0.08),
    "logreg": ({"family": "logistic-regression", "space": "logistic-regression"},
               {"method": "aga", "cv_folds": 3, "budget": {"pop_size": 10, "generations": 5}}, 0.15),
    "mlp": ({"family": "mlp", "space": "mlp-genome", "fixed": {"epochs": 15}},
            {"method": "ga", "cv_folds": 3, "budget": {"pop_size": 6, "generations": 3}}, 0.45),
    "gbm": ({"family": "gradient-boosting", "space": "gbm"},
            {"method": "tpe", "cv_folds": 3, "budget": {"n_trials": 12, "n_startup": 5}}, 0.30),
    "adaboost": ({"family": "adaboost", "space": "adaboost"},
                 {"method": "sa", "cv_folds": 3, "budget": {"max_steps": 20}}, 0.02),
    "tree": ({"family": "decision-tree", "params": {"max_depth": 3}}, None, 0.45),
}


def config_for(name: str, seed: int, rows: int | None) -> dict:
    model, opt, rho = RUNS[name]
    cfg = copy.deepcopy(BASE)
    cfg["seed"] = seed
    if rows:
        cfg["dataset"]["generator_args"]["n_rows"] = rows
    cfg["input"] = {"source": "pca", "rho": rho}
    cfg["model"] = model
    if opt:
        cfg["optimizer"] = opt
    return cfg


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/epsilon_mini")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rows", type=int, help="override the number of generated rows")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=sorted(RUNS), help="subset of runs")
    args = ap.parse_args(argv)
    out = Path(args.out)
    for name in args.only or RUNS:
        chain = CHAIN if RUNS[name][1] else tuple(c for c in CHAIN if c != "optimize")
        run_commands(config_for(name, args.seed, args.rows), out / name, chain, args.jobs)
    code = tabhpo_main(["report", "--out", str(out), "--results", *[str(out / n / "results") for n in args.only or RUNS]])
    print((out / "report.md").read_text(encoding="utf-8"))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
