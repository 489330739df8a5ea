"""JSON experiment configuration with strict schema checking.

Unknown keys are rejected and every diagnostic names the offending field
path (``optimizer.budget.generations``); JSON syntax errors carry the line
and column.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

ROLES = ("numeric", "log-numeric", "categorical", "multi-token", "entity-list", "text-embedding-ref", "target",
         "drop", "id")
METHODS = ("grid", "ga", "aga", "sa", "tpe", "random")
SOURCES = ("raw", "pca", "encoded")

SCHEMA: dict = {
    "name": str,
    "seed": int,
    "output_dir": str,
    "dataset": {
        "path": str, "format": ("csv", "svmlight"), "target": str, "task": ("classification", "regression"),
        "n_features": int, "generator": str, "generator_args": dict, "id_column": str,
    },
    "schema": dict,
    "encode": {"k_min": (int, float), "f": (int, float), "drop": list, "separator": str,
               "embeddings": dict, "embedding_width": int,
               "per_column": dict},
    "sampling": {"rhos": list},
    "split": {"train_fraction": (int, float)},
    "pca": {"k": int, "variance": (int, float), "fit_on": (int, float), "standardize": ("before", "after", "none")},
    "input": {"source": SOURCES, "rho": (int, float)},
    "model": {"family": str, "task": ("classification", "regression"), "params": dict, "space": (str, dict),
              "fixed": dict},
    "optimizer": {"method": METHODS, "budget": dict, "cv_folds": int, "metric": str, "jobs": int},
    "ensemble": {"members": list, "k": int, "weight_rule": ("validation-accuracy-proportional", "uniform", "explicit"),
                 "weights": list},
    "textprep": {"input": str, "column": str, "emoji": str, "idioms": str, "stopwords": str, "whitelist": str,
                 "skip": list},
}

DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "runs/default",
    "sampling": {"rhos": [0.02, 0.08, 0.15, 0.30, 0.45]},
    "split": {"train_fraction": 0.8},
    "pca": {"variance": 0.95, "fit_on": 0.45, "standardize": "before"},
    "input": {"source": "raw"},
    "optimizer": {"method": "grid", "budget": {}, "cv_folds": 3, "metric": "accuracy"},
    "encode": {"k_min": 20, "f": 10},
    "ensemble": {"k": 5, "weight_rule": "validation-accuracy-proportional"},
}


def _check(node: Any, schema: Any, path: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            raise ConfigError(f"config field {path or '<root>'}: expected an object, got {type(node).__name__}")
        for k, v in node.items():
            where = f"{path}.{k}" if path else k
            if k not in schema:
                raise ConfigError(f"config field {where}: unknown key (allowed: {', '.join(sorted(schema))})")
            _check(v, schema[k], where)
    elif isinstance(schema, tuple) and schema and all(isinstance(s, str) for s in schema):
        if node not in schema:
            raise ConfigError(f"config field {path}: {node!r} is not one of {list(schema)}")
    elif isinstance(schema, tuple):
        if not isinstance(node, schema) or isinstance(node, bool) and bool not in schema:
            names = "/".join(s.__name__ for s in schema)
            raise ConfigError(f"config field {path}: expected {names}, got {type(node).__name__}")
    else:
        if not isinstance(node, schema) or (isinstance(node, bool) and schema is not bool):
            raise ConfigError(f"config field {path}: expected {schema.__name__}, got {type(node).__name__}")


def _merge(base: dict, over: dict) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    source: str = "<dict>"
    data: dict = field(init=False)

    def __post_init__(self):
        _check(self.raw, SCHEMA, "")
        self.data = _merge(DEFAULTS, self.raw)
        roles = self.data.get("schema", {})
        for col, role in roles.items():
            if role not in ROLES:
                raise ConfigError(f"config field schema.{col}: role {role!r} is not one of {list(ROLES)}")
        rhos = self.data["sampling"]["rhos"]
        if not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in rhos):
            raise ConfigError("config field sampling.rhos: every entry must be a number")

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        raw = dict(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if output_dir is not None:
            raw["output_dir"] = output_dir
        return ExperimentConfig(raw, self.source)

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return ExperimentConfig(raw, str(path))
