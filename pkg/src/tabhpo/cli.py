"""Config-driven experiment harness.

Each subcommand reads the JSON config, checks that the artifacts it depends
on exist, writes its outputs under the run directory and finishes with an
atomically written manifest ``manifests/<command>.json``.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import io
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, container, features, fixtures, textprep
from .config import ExperimentConfig, load_config
from .dataset import Dataset
from .errors import ConfigError, DataError, InvariantError, TabHPOError
from .evalx import (
    RESULT_COLUMNS,
    EnsembleSpec,
    classification_metrics,
    ensemble_predict,
    read_results,
    regression_metrics,
    result_row,
    write_results,
)
from .loaders import load_dataset, read_table
from .models import ModelSpec, cv_objective, fit, fit_regressor, load_model, predict, save_model
from .optimizers import run_adaptive_ga, run_ga, run_grid, run_sa, run_tpe
from .optimizers.base import format_param
from .pipeline import SamplingPlan, Standardizer, fit_projector, holdout_indices, project, sample_plan
from .rng import derive_rng, derive_seed
from .searchspace import INACTIVE, ParamDim, SearchSpace
from .spaces import DEFAULT_SPACES, default_space

log = logging.getLogger("tabhpo")

COMMANDS = ("sample", "pca", "textprep", "encode", "optimize", "train", "evaluate", "ensemble", "report")

MODEL_NAMES = {
    "kernel-svm": "SVM", "linear-svm": "Linear SVM", "logistic-regression": "Logistic Regression",
    "decision-tree": "Decision Tree", "random-forest": "Random Forest", "adaboost": "AdaBoost",
    "gradient-boosting": "Gradient Boosting", "mlp": "MLP", "elastic-net": "Elastic Net",
}
OPTIMIZER_NAMES = {"grid": "Grid Search", "ga": "GA", "aga": "AGA", "sa": "SA", "tpe": "TPE",
                   "random": "Random Search", "none": "None"}

SPACE_ALIASES = {"svm-grid": "kernel-svm", "mlp-genome": "mlp", "gbm": "gradient-boosting"}


class MissingArtifact(ConfigError):
    def __init__(self, path: Path, producer: str):
        super().__init__(f"missing artifact {path}: run `tabhpo {producer}` first")
        self.path, self.producer = path, producer


# logging ------------------------------------------------------------------

class JsonLines(logging.Formatter):
    def format(self, record):
        entry = {"ts": round(record.created, 3), "level": record.levelname.lower(),
                 "logger": record.name, "msg": record.getMessage()}
        entry.update(getattr(record, "fields", {}))
        return json.dumps(entry, default=str, ensure_ascii=False)


def _setup_logging(verbose: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLines())
    root = logging.getLogger("tabhpo")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False
    return handler


def _event(msg: str, **fields):
    log.info(msg, extra={"fields": fields})


# run context ------------------------------------------------------------------

@dataclass
class Run:
    cfg: ExperimentConfig
    out: Path
    command: str
    jobs: int = 1
    artifacts: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def rel(self, path: Path) -> str:
        try:
            return Path(path).resolve().relative_to(self.out.resolve()).as_posix()
        except ValueError:
            return str(path)

    def output(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        if self.rel(p) not in self.artifacts:
            self.artifacts.append(self.rel(p))
        return p

    def need(self, rel: str, producer: str) -> Path:
        p = self.out / rel
        if not p.exists():
            raise MissingArtifact(p, producer)
        self.inputs.append(rel)
        return p

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - start, 6)

    def write_manifest(self):
        doc = {
            "command": self.command,
            "config_hash": self.cfg.digest(),
            "tool_version": __version__,
            "seed": self.seed,
            "inputs": sorted(set(self.inputs)),
            "artifacts": self.artifacts,
            "timings": self.timings,
        }
        path = self.out / "manifests" / f"{self.command}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        container.atomic_write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))
        return path


def _write_text(path: Path, text: str):
    container.atomic_write_bytes(path, text.encode("utf-8"))


def _write_json(path: Path, doc):
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


# data sources ---------------------------------------------------------------

GENERATORS = {
    "epsilon-mini": fixtures.epsilon_mini,
    "labelled-rows": fixtures.labelled_rows,
    "reviews": fixtures.reviews_table,
    "movies": fixtures.movies_table,
}
TABLE_GENERATORS = ("reviews", "movies")


def _generator(ds: dict):
    name = ds["generator"]
    if name not in GENERATORS:
        raise ConfigError(f"config field dataset.generator: unknown generator {name!r} "
                          f"(known: {sorted(GENERATORS)})")
    args = dict(ds.get("generator_args", {}))
    try:
        inspect.signature(GENERATORS[name]).bind(**args)
    except TypeError as exc:
        raise ConfigError(f"config field dataset.generator_args: {exc}") from None
    if "proportions" in args:
        args["proportions"] = tuple(args["proportions"])
    return GENERATORS[name](**args)


def _dataset_info(cfg: ExperimentConfig) -> dict:
    ds = cfg.get("dataset")
    if not ds or not ("path" in ds or "generator" in ds):
        raise ConfigError("config field dataset: needs either 'path' or 'generator'")
    return ds


def _dataset_name(cfg: ExperimentConfig) -> str:
    if cfg.get("name"):
        return cfg["name"]
    ds = cfg.get("dataset", {})
    return ds.get("generator") or Path(ds.get("path", "data")).stem


def source_table(run: Run):
    ds = _dataset_info(run.cfg)
    if "generator" in ds:
        if ds["generator"] not in TABLE_GENERATORS:
            raise ConfigError(f"config field dataset.generator: {ds['generator']!r} does not produce a table")
        return _generator(ds)
    return read_table(ds["path"])


def source_dataset(run: Run, fmt: str | None = None) -> Dataset:
    ds = _dataset_info(run.cfg)
    if "generator" in ds:
        if ds["generator"] in TABLE_GENERATORS:
            raise ConfigError(f"generator {ds['generator']!r} yields a raw table: run `tabhpo encode` and set "
                              "input.source to 'encoded'")
        return _generator(ds)
    return load_dataset(ds["path"], fmt or ds.get("format", "csv"), ds.get("target"), ds.get("n_features"),
                        ds.get("id_column"))


def _task(cfg: ExperimentConfig) -> str:
    return cfg.get("model", {}).get("task") or cfg.get("dataset", {}).get("task") or "classification"


def _rho_tag(rho: float) -> str:
    return f"{float(rho):g}"


def _sample_rel(rho: float) -> str:
    return f"samples/rho_{_rho_tag(rho)}.csv"


def _read_index_file(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row_index"]:
            raise DataError(f"{path}: expected a 'row_index' header")
        return np.array([int(r[0]) for r in reader if r], dtype=np.int64)


def model_data(run: Run, fmt: str | None = None) -> tuple[Dataset, Dataset, dict]:
    """Train and test splits for the configured input source."""
    cfg = run.cfg
    src = cfg["input"]["source"]
    rho = cfg["input"].get("rho")
    task = _task(cfg)
    if src == "encoded":
        _, meta, a = container.load(run.need("encode/features.bin", "encode"), "features")
        names = meta["feature_names"]
        tr = Dataset(a["X_train"], a["y_train"], a["rows_train"], names)
        te = Dataset(a["X_test"], a["y_test"], a["rows_test"], names)
        return tr, te, {"rho": 1.0}
    data = source_dataset(run, fmt)
    if src == "pca":
        rho = cfg["pca"]["fit_on"] if rho is None else rho
        _, meta, a = container.load(run.need(f"pca/projected_rho_{_rho_tag(rho)}.bin", "pca"), "projected")
        rows = a["rows"]
        data = Dataset(a["X"], data.y[rows], data.row_ids[rows], meta["feature_names"])
    elif rho is not None:
        rows = _read_index_file(run.need(_sample_rel(rho), "sample"))
        data = data.subset(rows)
    tr, te, warns = holdout_indices(data, cfg["split"]["train_fraction"], derive_seed(run.seed, "split"), task)
    for w in warns:
        log.warning(w)
    return data.subset(tr), data.subset(te), {"rho": 1.0 if rho is None else float(rho)}


# search spaces ------------------------------------------------------------------

def resolve_space(model: dict) -> SearchSpace:
    spec = model.get("space", model.get("family"))
    if isinstance(spec, dict):
        try:
            return SearchSpace.from_config(spec)
        except ConfigError as exc:
            raise ConfigError(f"config field model.space: {exc}") from None
    name = SPACE_ALIASES.get(spec, spec)
    if name not in DEFAULT_SPACES:
        raise ConfigError(f"config field model.space: no space named {spec!r} "
                          f"(known: {sorted(DEFAULT_SPACES) + sorted(SPACE_ALIASES)})")
    return default_space(name)


def _plain(value):
    if value is INACTIVE:
        return None
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _candidate_params(cand) -> dict:
    return {k: _plain(v) for k, v in cand.active_items().items()}


def _model_params(params: dict) -> dict:
    out = dict(params)
    if isinstance(out.get("hidden_layers"), list):
        out["hidden_layers"] = tuple(out["hidden_layers"])
    return out


OPTIMIZERS = {"grid": run_grid, "ga": run_ga, "aga": run_adaptive_ga, "sa": run_sa, "tpe": run_tpe,
              "random": run_tpe}
_RESERVED = {"space", "objective", "seed", "jobs", "init"}


def run_optimizer(method: str, space: SearchSpace, objective, budget: dict, seed: int, jobs: int,
                  cv_folds: int):
    fn = OPTIMIZERS[method]
    sig = inspect.signature(fn)
    allowed = set(sig.parameters) - _RESERVED
    for key in budget:
        if key not in allowed or (method == "random" and key == "n_startup"):
            raise ConfigError(f"config field optimizer.budget.{key}: not a {method} setting "
                              f"(allowed: {sorted(allowed)})")
    kwargs = dict(budget, seed=seed)
    if "jobs" in sig.parameters:
        kwargs["jobs"] = jobs
    if method == "grid":
        kwargs["cv_folds"] = cv_folds
    if method == "random":
        kwargs["n_startup"] = kwargs.get("n_trials", 15)
    return fn(space, objective, **kwargs)


# subcommands ----------------------------------------------------------------------

def cmd_sample(run: Run, args) -> None:
    with run.stage("load"):
        data = source_dataset(run, args.format)
    plan = SamplingPlan(tuple(run.cfg["sampling"]["rhos"]), derive_seed(run.seed, "sample"))
    with run.stage("sample"):
        res = sample_plan(data, plan)
    if not res.nested:
        log.warning("sampling plan is not nested for this class distribution")
    sizes = {}
    for rho, idx in res.indices.items():
        buf = io.StringIO()
        buf.write("row_index\n")
        buf.writelines(f"{int(i)}\n" for i in idx)
        _write_text(run.output(_sample_rel(rho)), buf.getvalue())
        sizes[_rho_tag(rho)] = int(len(idx))
    _write_json(run.output("samples/summary.json"), {"n_rows": data.n_rows, "sizes": sizes, "nested": res.nested})
    _event("sampled", sizes=sizes, nested=res.nested)


def cmd_pca(run: Run, args) -> None:
    pc = run.cfg["pca"]
    rhos = run.cfg["sampling"]["rhos"]
    with run.stage("load"):
        data = source_dataset(run, args.format)
    fit_rows = _read_index_file(run.need(_sample_rel(pc["fit_on"]), "sample"))
    ref = data.subset(fit_rows).dense()
    std = None
    if pc["standardize"] == "before":
        std = Standardizer.fit(ref)
        ref = std.transform(ref)
    with run.stage("fit"):
        proj = fit_projector(ref, pc.get("k"), pc["variance"], fitted_on=f"rho={_rho_tag(pc['fit_on'])}",
                             seed=derive_seed(run.seed, "pca"))
    if std is not None:
        std.save(run.output("pca/standardizer.bin"))
    proj.save(run.output("pca/projector.bin"))
    names = [f"pc{i}" for i in range(proj.k)]
    post = None
    with run.stage("project"):
        for rho in rhos:
            rel = _sample_rel(rho)
            if not (run.out / rel).exists():
                continue
            rows = _read_index_file(run.need(rel, "sample"))
            X = data.subset(rows).dense()
            Z = project(proj, std.transform(X) if std is not None else X)
            if pc["standardize"] == "after":
                post = post or Standardizer.fit(project(proj, ref))
                Z = post.transform(Z)
            container.save(run.output(f"pca/projected_rho_{_rho_tag(rho)}.bin"), "projected",
                           {"rho": float(rho), "feature_names": names},
                           {"X": np.ascontiguousarray(Z), "rows": rows})
    _event("projected", k=proj.k, explained=float(proj.explained_variance_ratio.sum()))


def cmd_textprep(run: Run, args) -> None:
    tp = run.cfg.get("textprep", {})
    cfg = textprep.load_config(tp.get("emoji"), tp.get("idioms"), tp.get("stopwords"), tp.get("whitelist"),
                               skip=tp.get("skip", ()))
    bad = set(cfg.skip) - set(textprep.STAGES)
    if bad:
        raise ConfigError(f"config field textprep.skip: unknown stages {sorted(bad)}")
    table = read_table(tp["input"]) if "input" in tp else source_table(run)
    column = tp.get("column", "review")
    if column not in table.columns:
        raise ConfigError(f"config field textprep.column: {column!r} not in {list(table.columns)}")
    target = run.cfg.get("dataset", {}).get("target")
    totals: dict = {s: {} for s in textprep.STAGES}
    passes: dict = {}
    vocab: set = set()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "tokens"] + ([target] if target in table.columns else []))
    with run.stage("normalize"):
        for i, text in enumerate(table[column].astype(str).tolist()):
            res = textprep.run_pipeline(text, cfg)
            for rec in res.trace:
                agg = totals[rec["stage"]]
                for k, v in rec.items():
                    if k not in ("stage", "length"):
                        agg[k] = agg.get(k, 0) + int(v)
            passes[res.passes] = passes.get(res.passes, 0) + 1
            vocab.update(res.tokens)
            extra = [table[target].iloc[i]] if target in table.columns else []
            w.writerow([i, " ".join(res.tokens)] + extra)
    _write_text(run.output("textprep/tokens.csv"), buf.getvalue())
    report = {"rows": len(table), "column": column, "stages": {s: totals[s] for s in textprep.STAGES
                                                                 if s not in cfg.skip},
              "passes": {str(k): v for k, v in sorted(passes.items())}, "vocabulary": len(vocab)}
    _write_json(run.output("textprep/report.json"), report)
    _event("normalized", rows=len(table), vocabulary=len(vocab))


def cmd_encode(run: Run, args) -> None:
    cfg = run.cfg
    roles = cfg.get("schema")
    if not roles:
        raise ConfigError("config field schema: encode needs a column -> role mapping")
    targets = [c for c, r in roles.items() if r == "target"]
    if len(targets) != 1:
        raise ConfigError(f"config field schema: exactly one target column required, found {targets}")
    target = targets[0]
    enc = cfg["encode"]
    sep = enc.get("separator", features.DEFAULT_SEPARATOR)
    table = source_table(run)
    missing = [c for c in roles if c not in table.columns and roles[c] not in ("drop",)]
    if missing:
        raise DataError(f"schema columns not found in the table: {missing}")
    id_col = next((c for c, r in roles.items() if r == "id"), None)
    ids = table[id_col].to_numpy() if id_col else np.arange(len(table))
    audit: list = []
    drop = list(enc.get("drop", features.LEAKAGE_DROP)) + [c for c, r in roles.items() if r == "drop"]
    table = features.prune_leakage(table, drop, audit)
    for c in table.columns:
        if c not in roles and c != id_col:
            audit.append({"event": "ignored", "column": c, "reason": "no schema role"})
    task = _task(cfg)
    y = table[target].to_numpy()
    if task == "regression":
        y = y.astype(float)
    probe = Dataset(np.zeros((len(table), 0)), y, ids)
    tr, te, warns = holdout_indices(probe, cfg["split"]["train_fraction"], derive_seed(run.seed, "split"), task)
    for wmsg in warns:
        log.warning(wmsg)
    if task == "classification" and y.dtype.kind not in "biuf":
        raise DataError(f"target column {target!r} must be numeric for the binary container")
    ttr, tte = table.iloc[tr], table.iloc[te]
    ytr = y[tr].astype(float)

    blocks_tr, blocks_te = [], []

    def add(block_tr, block_te):
        blocks_tr.append(block_tr)
        blocks_te.append(block_te)
        audit.append({"event": "block", "name": block_tr.name, "width": block_tr.width,
                      "provenance": block_tr.provenance})

    num = [c for c, r in roles.items() if r in ("numeric", "log-numeric") and c in table.columns]
    logs = [c for c in num if roles[c] == "log-numeric"]
    if num:
        add(features.numeric_block(ttr, num, logs), features.numeric_block(tte, num, logs))
    with run.stage("encode"):
        for c, r in roles.items():
            if c not in table.columns:
                continue
            if r == "categorical":
                own = enc.get("per_column", {}).get(c, {})
                extra = set(own) - {"k_min", "f"}
                if extra:
                    raise ConfigError(f"config field encode.per_column.{c}: unknown keys {sorted(extra)}")
                m = features.fit_target_encoder(ttr[c].astype(str), ytr, own.get("k_min", enc["k_min"]),
                                                own.get("f", enc["f"]))
                add(features.encode_target(m, ttr[c].astype(str), f"cat_smooth:{c}"),
                    features.encode_target(m, tte[c].astype(str), f"cat_smooth:{c}"))
            elif r == "multi-token":
                v = features.fit_multihot(ttr[c].fillna("").astype(str), sep)
                add(features.apply_multihot(v, ttr[c].fillna("").astype(str), f"multi_hot:{c}"),
                    features.apply_multihot(v, tte[c].fillna("").astype(str), f"multi_hot:{c}"))
            elif r == "entity-list":
                rep = features.fit_reputation(ttr[c].fillna("").astype(str), ytr, sep)
                add(features.reputation_features(rep, ttr[c].fillna("").astype(str), f"reputation:{c}"),
                    features.reputation_features(rep, tte[c].fillna("").astype(str), f"reputation:{c}"))
            elif r == "text-embedding-ref":
                paths = enc.get("embeddings", {})
                if c not in paths:
                    raise ConfigError(f"config field encode.embeddings.{c}: no embedding file for this column")
                width = enc.get("embedding_width")
                add(features.load_embeddings(paths[c], width, ids[tr], f"embedding:{c}"),
                    features.load_embeddings(paths[c], width, ids[te], f"embedding:{c}"))
    if not blocks_tr:
        raise ConfigError("config field schema: no feature columns declared")
    A_tr, A_te = features.assemble(blocks_tr), features.assemble(blocks_te)
    names = []
    for name, a, z in A_tr.offsets:
        names.extend(f"{name}[{j}]" for j in range(z - a)) if z - a > 1 else names.append(name)
    rows_tr = np.asarray(tr, dtype=np.int64)
    rows_te = np.asarray(te, dtype=np.int64)
    container.save(run.output("encode/features.bin"), "features",
                   {"feature_names": names, "offsets": [list(o) for o in A_tr.offsets], "target": target,
                    "task": task},
                   {"X_train": A_tr.matrix, "y_train": y[tr], "rows_train": rows_tr,
                    "X_test": A_te.matrix, "y_test": y[te], "rows_test": rows_te})
    lines = "".join(json.dumps(r, sort_keys=True, default=_json_default) + "\n" for r in audit)
    _write_text(run.output("encode/audit.jsonl"), lines)
    _event("encoded", width=A_tr.width, train=len(tr), test=len(te))


def _model_cfg(cfg: ExperimentConfig) -> dict:
    model = cfg.get("model")
    if not model or "family" not in model:
        raise ConfigError("config field model.family: required")
    return model


def cmd_optimize(run: Run, args) -> None:
    cfg = run.cfg
    model = _model_cfg(cfg)
    opt = cfg["optimizer"]
    space = resolve_space(model)
    with run.stage("load"):
        train, _, info = model_data(run, args.format)
    k = int(opt["cv_folds"])
    objective = cv_objective(model["family"], train, k, opt["metric"], model.get("fixed"), _task(cfg),
                             translate=_model_params)
    with run.stage("search"):
        res = run_optimizer(opt["method"], space, objective, dict(opt["budget"]), derive_seed(run.seed, "optimize"),
                            run.jobs, k)
    _write_text(run.output("optimize/history.csv"), res.history_csv(space))
    best = {
        "family": model["family"],
        "method": opt["method"],
        "params": _candidate_params(res.best.candidate),
        "fitness": res.best.fitness,
        "trial_index": res.best.trial_index,
        "n_trials": len(res.history),
        "n_fits": res.n_model_fits,
        "rho": info["rho"],
    }
    _write_json(run.output("optimize/best.json"), best)
    _event("optimized", method=opt["method"], trials=len(res.history), fits=res.n_model_fits,
           best=res.best.fitness)


def _fit_spec(spec: ModelSpec, train: Dataset, rng):
    return fit(spec, train, rng) if spec.task == "classification" else fit_regressor(spec, train, rng)


def cmd_train(run: Run, args) -> None:
    cfg = run.cfg
    model = _model_cfg(cfg)
    best_path = run.out / "optimize/best.json"
    params = dict(model.get("fixed", {}))
    meta = {"optimizer": "none", "n_fits": 1}
    if model.get("params") is not None and not best_path.exists():
        params.update(model["params"])
    else:
        best = json.loads(run.need("optimize/best.json", "optimize").read_text(encoding="utf-8"))
        params.update(best["params"])
        meta = {"optimizer": best["method"], "cv_fitness": best["fitness"], "n_fits": best["n_fits"] + 1}
    with run.stage("load"):
        train, _, info = model_data(run, args.format)
    spec = ModelSpec(model["family"], _model_params(params), _task(cfg))
    with run.stage("fit"):
        fm = _fit_spec(spec, train, derive_rng(run.seed, "train"))
    fm.training_meta.update(meta, rho=info["rho"])
    save_model(fm, run.output("train/model.bin"))
    _event("trained", family=fm.family, rows=train.n_rows)


def _metrics(task: str, y, pred) -> dict:
    if task == "classification":
        m = classification_metrics(y, pred)
        m["confusion"] = m["confusion"].to_rows()
        return m
    return regression_metrics(y, pred)


def _result_fields(task: str, m: dict) -> dict:
    if task == "classification":
        return {"accuracy": float(m["accuracy"]), "f1_macro": float(m["f1_macro"])}
    keys = ("mae", "rmse", "r2")
    return {k: float(m[k]) for k in keys if m.get(k) is not None and np.isfinite(m[k])}


def cmd_evaluate(run: Run, args) -> None:
    fm = load_model(run.need("train/model.bin", "train"))
    with run.stage("load"):
        train, test, info = model_data(run, args.format)
    out, rows = {}, []
    for split, data in (("train", train), ("test", test)):
        if data.n_rows == 0:
            continue
        m = _metrics(fm.task, data.y, predict(fm, data.X))
        out[split] = m
        rows.append(result_row(dataset=_dataset_name(run.cfg), model=fm.family,
                               optimizer=fm.training_meta.get("optimizer", "none"), rho=info["rho"], split=split,
                               n_fits=int(fm.training_meta.get("n_fits", 1)), **_result_fields(fm.task, m)))
    _write_json(run.output("evaluate/metrics.json"), out)
    write_results(run.output("results/results.csv"), rows)
    _event("evaluated", **{s: out[s].get("accuracy", out[s].get("r2")) for s in out})


def cmd_ensemble(run: Run, args) -> None:
    cfg = run.cfg
    ens = cfg["ensemble"]
    with run.stage("load"):
        train, test, info = model_data(run, args.format)
    members, names, detail = [], [], []
    if ens.get("members"):
        weights = ens.get("weights")
        if weights is not None and len(weights) != len(ens["members"]):
            raise ConfigError("config field ensemble.weights: one weight per member required")
        for i, rel in enumerate(ens["members"]):
            p = Path(rel) if Path(rel).is_absolute() else run.out / rel
            if not p.exists():
                raise MissingArtifact(p, "train")
            fm = load_model(p)
            w = weights[i] if weights is not None else fm.training_meta.get("cv_fitness", 1.0)
            members.append((fm, float(w)))
            names.append(Path(rel).as_posix())
    else:
        model = _model_cfg(cfg)
        history = read_history(run.need("optimize/history.csv", "optimize"), resolve_space(model))
        ranked = sorted(history, key=lambda r: (-r[1], r[2]))
        seen, picked = set(), []
        for params, fitness, idx in ranked:
            key = json.dumps(params, sort_keys=True)
            if key not in seen and np.isfinite(fitness):
                seen.add(key)
                picked.append((params, fitness, idx))
            if len(picked) == ens["k"]:
                break
        if not picked:
            raise DataError("optimizer history has no successful trial")
        for params, fitness, idx in picked:
            spec = ModelSpec(model["family"], _model_params({**model.get("fixed", {}), **params}), _task(cfg))
            fm = _fit_spec(spec, train, derive_rng(run.seed, "ensemble", idx))
            members.append((fm, fitness))
            names.append(f"trial{idx}")
            detail.append({"trial_index": idx, "params": params, "cv_fitness": fitness})
    if _task(cfg) != "classification":
        raise ConfigError("ensembles are defined for classification only")
    rule = "explicit" if ens.get("weights") is not None else ens["weight_rule"]
    spec = EnsembleSpec(tuple(members), rule, tuple(names))
    rows, out = [], {}
    label = f"ensemble-{len(members)}"
    for split, data in (("train", train), ("test", test)):
        if data.n_rows == 0:
            continue
        m = _metrics("classification", data.y, ensemble_predict(spec, data.X))
        out[split] = m
        rows.append(result_row(dataset=_dataset_name(cfg), model=label, optimizer=cfg["optimizer"]["method"],
                               rho=info["rho"], split=split, n_fits=len(members),
                               **_result_fields("classification", m)))
    _write_json(run.output("ensemble/ensemble.json"),
                {"members": list(spec.names), "weights": spec.weights.tolist(), "weight_rule": spec.weight_rule,
                 "detail": detail, "metrics": out})
    write_results(run.output("results/ensemble.csv"), rows)
    _event("ensembled", members=len(members), **{s: out[s]["accuracy"] for s in out})


def read_history(path: Path, space: SearchSpace) -> list[tuple[dict, float, int]]:
    """(active params, fitness, trial_index) per row of an optimizer history CSV."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            params = {}
            for dim in space:
                raw = row.get(dim.name, "")
                if raw == "":
                    continue
                params[dim.name] = _parse_value(dim, raw)
            out.append((params, float(row["fitness"]), int(row["trial_index"])))
    return out


def _parse_value(dim: ParamDim, raw: str):
    if dim.kind == "categorical":
        for v in dim.values:
            if format_param(v) == raw:
                return _plain(v)
        raise DataError(f"history value {raw!r} is not a category of {dim.name}")
    return int(raw) if dim.kind == "int" else float(raw)




REPORT_HEADER = ("| Model | Optimization | Subsample (%) | Test / Train Acc. |\n"
                 "|---|---|---|---|\n")


def _collect_results(paths) -> list[dict]:
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise MissingArtifact(p, "evaluate")
    rows = []
    for f in files:
        with open(f, encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh), None)
        if header != list(RESULT_COLUMNS):
            continue
        rows.extend(read_results(f))
    return rows


def render_report(rows: list[dict]) -> str:
    groups: dict = {}
    for r in rows:
        key = (r["dataset"], r["model"], r["optimizer"], r["rho"])
        groups.setdefault(key, {})[r["split"]] = r
    lines = [REPORT_HEADER]
    for (_, model, optimizer, rho), split in groups.items():
        def acc(s):
            v = split.get(s, {}).get("accuracy", "")
            return f"{float(v):.4f}" if v not in ("", None) else "-"
        pct = f"{float(rho) * 100:g}" if rho not in ("", None) else "-"
        lines.append(f"| {MODEL_NAMES.get(model, model)} | {OPTIMIZER_NAMES.get(optimizer, optimizer)} | {pct} | "
                     f"{acc('test')} / {acc('train')} |\n")
    return "".join(lines)


def cmd_report(run: Run, args) -> None:
    paths = args.results or [run.out / "results"]
    if not args.results and not (run.out / "results").exists():
        paths = []
    rows = _collect_results(paths)
    _write_text(run.output("report.md"), render_report(rows))
    _event("reported", rows=len(rows))


HANDLERS = {
    "sample": cmd_sample, "pca": cmd_pca, "textprep": cmd_textprep, "encode": cmd_encode,
    "optimize": cmd_optimize, "train": cmd_train, "evaluate": cmd_evaluate, "ensemble": cmd_ensemble,
    "report": cmd_report,
}


# entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabhpo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tabhpo {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel candidate evaluations")
    common.add_argument("--out", help="run directory (overrides output_dir)")
    common.add_argument("--format", choices=("csv", "svmlight"), help="override dataset.format")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} stage")
        if name == "report":
            p.add_argument("--results", nargs="*", help="result CSV files or directories")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "report":
            cfg = ExperimentConfig({})
        else:
            raise ConfigError("--config is required")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = cfg.with_overrides(seed=args.seed, output_dir=args.out)
        run = Run(cfg, Path(cfg["output_dir"]), args.command, args.jobs)
        run.out.mkdir(parents=True, exist_ok=True)
        with run.stage("total"):
            HANDLERS[args.command](run, args)
        manifest = run.write_manifest()
        _event("done", command=args.command, manifest=str(manifest))
        return 0
    except TabHPOError as exc:
        log.error(str(exc), extra={"fields": {"error": type(exc).__name__, "exit_code": exc.exit_code}})
        return exc.exit_code
    except (ValueError, KeyError, TypeError) as exc:
        # user-facing mistakes that surfaced below the config layer
        log.error(str(exc), extra={"fields": {"error": type(exc).__name__, "exit_code": 1}})
        return 1
    except Exception as exc:  # noqa: BLE001
        log.error(f"internal error: {exc}", extra={"fields": {"error": type(exc).__name__, "exit_code": 3}})
        return InvariantError.exit_code


def run_commands(config: dict, out, commands=COMMANDS[:1], jobs: int = 1) -> Path:
    """Write ``config`` to ``out/config.json`` and run ``commands`` in order; raises on failure."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    _write_json(path, config)
    for name in commands:
        code = main([name, "--config", str(path), "--out", str(out), "--jobs", str(jobs)])
        if code:
            raise TabHPOError(f"`tabhpo {name}` failed with exit code {code} (run directory {out})")
    return out


if __name__ == "__main__":
    sys.exit(main())
