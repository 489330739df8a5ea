"""Review-polarity classification on the synthetic reviews table.

Reviews are normalised by ``textprep`` (masking, emoji tokens, idiom map,
negation-aware stopword filter); the token sets are multi-hot encoded and a
logistic regression is tuned by the adaptive GA.  The five best distinct
trials are refitted into a weighted-voting ensemble.
"""

import argparse
from pathlib import Path

from tabhpo.cli import run_commands


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/restmex_mini")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rows", type=int, default=500)
    args = ap.parse_args(argv)
    out = Path(args.out)
    text_dir = run_commands({
        "name": "restmex-mini", "seed": args.seed,
        "dataset": {"generator": "reviews", "generator_args": {"n_rows": args.rows}, "target": "polarity"},
        "textprep": {"column": "review"},
    }, out / "textprep", ("textprep",))
    run_commands({
        "name": "restmex-mini", "seed": args.seed,
        "dataset": {"path": str(text_dir / "textprep" / "tokens.csv")},
        "schema": {"row": "id", "tokens": "multi-token", "polarity": "target"},
        "encode": {"separator": " ", "drop": []},
        "input": {"source": "encoded"},
        "model": {"family": "logistic-regression", "space": "logistic-regression"},
        "optimizer": {"method": "aga", "cv_folds": 3, "metric": "f1-macro",
                      "budget": {"pop_size": 8, "generations": 4}},
        "ensemble": {"k": 5},
    }, out / "model", ("encode", "optimize", "train", "evaluate", "ensemble", "report"))
    print((out / "model" / "report.md").read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
