"""Movie-rating regression on the synthetic movies table.

Leakage pruning, log-scaled counts, multi-hot genres, smoothed target
encoding for high-cardinality categoricals and cast/director reputation are
assembled by ``encode``; an elastic-net baseline, a random forest and a
TPE-tuned gradient-boosting model are then fitted on the 80% split.
"""

import argparse
import copy
from pathlib import Path

from tabhpo.cli import run_commands

SCHEMA = {
    "avg_vote": "target", "imdb_title_id": "id", "title": "drop",
    "duration": "numeric", "year": "numeric", "votes": "log-numeric",
    "genre": "multi-token", "production_company": "categorical", "country": "categorical",
    "actors": "entity-list", "director": "entity-list",
}

BASE = {
    "name": "imdb-mini",
    "dataset": {"generator": "movies", "generator_args": {"n_rows": 1000}, "task": "regression"},
    "schema": SCHEMA,
    "encode": {"k_min": 20, "f": 10},
    "split": {"train_fraction": 0.8},
    "input": {"source": "encoded"},
}

RUNS = {
    "elastic-net": ({"family": "elastic-net", "task": "regression", "params": {"reg_param": 0.01}}, None),
    "random-forest": ({"family": "random-forest", "task": "regression",
                       "params": {"n_estimators": 100, "max_depth": 8, "max_features": 0.5}}, None),
    "gbm": ({"family": "gradient-boosting", "task": "regression", "space": "gbm"},
            {"method": "tpe", "cv_folds": 3, "metric": "r2", "budget": {"n_trials": 12, "n_startup": 5}}),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/imdb_mini")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rows", type=int, default=1000)
    args = ap.parse_args(argv)
    out = Path(args.out)
    for name, (model, opt) in RUNS.items():
        cfg = copy.deepcopy(BASE)
        cfg["seed"] = args.seed
        cfg["dataset"]["generator_args"]["n_rows"] = args.rows
        cfg["model"] = model
        if opt:
            cfg["optimizer"] = opt
        chain = ("encode", "optimize", "train", "evaluate") if opt else ("encode", "train", "evaluate")
        run_commands(cfg, out / name, chain)
    for name in RUNS:
        print(name, (out / name / "results" / "results.csv").read_text(encoding="utf-8").splitlines()[-1])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
