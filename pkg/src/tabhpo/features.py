"""Feature engineering for hybrid tabular / text tables.

Leakage pruning, log counts, multi-hot sets, smoothed target encoding,
per-person reputation aggregates, precomputed embedding blocks and their
column-wise assembly.
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

LEAKAGE_DROP = ("imdb_title_id", "original_title", "date_published", "reviews_user", "reviews_critic",
                "metascore", "gross_income", "budget")
DROP_REASONS = {
    "imdb_title_id": "identifier",
    "original_title": "identifier",
    "date_published": "identifier",
    "reviews_user": "posterior-outcome",
    "reviews_critic": "posterior-outcome",
    "metascore": "posterior-outcome",
    "gross_income": "posterior-outcome",
    "budget": "posterior-outcome",
}
PROVENANCES = ("numeric", "cat-smooth", "reputation", "embedding-title", "embedding-desc", "multi-hot")
DEFAULT_SEPARATOR = ", "


@dataclass
class FeatureBlock:
    name: str
    matrix: np.ndarray
    provenance: str = "numeric"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        self.matrix = m.reshape(-1, 1) if m.ndim == 1 else m
        if self.provenance not in PROVENANCES:
            raise ConfigError(f"unknown block provenance {self.provenance!r}")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


# pruning & transforms -------------------------------------------------------

def prune_leakage(table: pd.DataFrame, drop_list: Sequence[str] | None = None,
                  audit: list | None = None) -> pd.DataFrame:
    """Drop leakage-prone columns.  One audit record per removed or missing name."""
    drop_list = LEAKAGE_DROP if drop_list is None else drop_list
    seen, keep_out = set(), []
    records = []
    for name in drop_list:
        if name in seen:
            log.warning("drop list names %r more than once", name)
            records.append({"event": "duplicate", "column": name})
            continue
        seen.add(name)
        if name in table.columns:
            keep_out.append(name)
            records.append({"event": "removed", "column": name, "reason": DROP_REASONS.get(name, "user")})
        else:
            log.warning("drop column %r not present", name)
            records.append({"event": "missing", "column": name})
    if audit is not None:
        audit.extend(records)
    return table.drop(columns=keep_out)


def log1p_transform(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~(v >= 0))
    if bad.size:
        raise DataError(f"log1p needs non-negative counts; row {int(bad[0])} holds {v[bad[0]]!r}")
    return np.log1p(v)


def _cells(column) -> list:
    out = []
    for c in column:
        if c is None or (isinstance(c, float) and math.isnan(c)):
            out.append("")
        else:
            out.append(str(c))
    return out


def split_tokens(cell: str, separator: str = DEFAULT_SEPARATOR) -> list[str]:
    sep = separator.strip() or separator
    return [t.strip() for t in cell.split(sep) if t.strip()]


# multi-hot ----------------------------------------------------------------

@dataclass(frozen=True)
class MultiHotVocab:
    tokens: tuple
    separator: str = DEFAULT_SEPARATOR

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("multi-hot vocabulary tokens must be unique")


def fit_multihot(column, separator: str = DEFAULT_SEPARATOR) -> MultiHotVocab:
    toks = sorted({t for c in _cells(column) for t in split_tokens(c, separator)})
    return MultiHotVocab(tuple(toks), separator)


def apply_multihot(vocab: MultiHotVocab, column, name: str = "multi_hot") -> FeatureBlock:
    index = {t: i for i, t in enumerate(vocab.tokens)}
    cells = _cells(column)
    M = np.zeros((len(cells), len(vocab.tokens)))
    unknown = 0
    for r, c in enumerate(cells):
        for t in split_tokens(c, vocab.separator):
            j = index.get(t)
            if j is None:
                unknown += 1
            else:
                M[r, j] = 1.0
    if unknown:
        log.info("multi-hot %s: %d unknown token occurrences ignored", name, unknown)
    return FeatureBlock(name, M, "multi-hot", {"unknown_tokens": unknown, "columns": list(vocab.tokens)})


# target encoding ------------------------------------------------------------

def smoothing_weight(n_c, k_min: float = 20.0, f: float = 10.0):
    """lambda(n_c) = 1 / (1 + exp(-(n_c - k_min) / f))."""
    if not f > 0:
        raise ConfigError("smoothing constant f must be positive")
    out = expit((np.asarray(n_c, dtype=float) - k_min) / f)
    return float(out) if np.ndim(out) == 0 else out


def _key(v) -> Hashable:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return v.item() if isinstance(v, np.generic) else v


@dataclass(frozen=True)
class TargetEncoderModel:
    category_stats: dict  # category -> (n_c, mu_c)
    mu_global: float
    k_min: float = 20.0
    f: float = 10.0

    def __post_init__(self):
        if not self.f > 0:
            raise ConfigError("smoothing constant f must be positive")

    def value(self, category) -> float:
        stats = self.category_stats.get(_key(category))
        if stats is None:
            return self.mu_global
        n_c, mu_c = stats
        lam = smoothing_weight(n_c, self.k_min, self.f)
        return lam * mu_c + (1.0 - lam) * self.mu_global


def fit_target_encoder(column, y, k_min: float = 20.0, f: float = 10.0) -> TargetEncoderModel:
    if not f > 0:
        raise ConfigError("smoothing constant f must be positive")
    y = np.asarray(y, dtype=float)
    keys = [_key(v) for v in column]
    if len(keys) != len(y):
        raise DataError(f"category column has {len(keys)} rows but target has {len(y)}")
    if len(y) == 0:
        raise DataError("cannot fit a target encoder on zero rows")
    sums: dict = {}
    counts: dict = {}
    for k, t in zip(keys, y):
        sums[k] = sums.get(k, 0.0) + t
        counts[k] = counts.get(k, 0) + 1
    stats = {k: (counts[k], sums[k] / counts[k]) for k in counts}
    return TargetEncoderModel(stats, float(np.mean(y)), float(k_min), float(f))


def encode_target(model: TargetEncoderModel, column, name: str = "cat_smooth") -> FeatureBlock:
    vals = np.array([model.value(v) for v in column], dtype=float)
    return FeatureBlock(name, vals, "cat-smooth")


# reputation -----------------------------------------------------------------

@dataclass(frozen=True)
class ReputationTable:
    person_stats: dict  # person -> (sum_y, count)
    mu_global: float
    separator: str = DEFAULT_SEPARATOR

    def reputation(self, person: str) -> float:
        s = self.person_stats.get(person)
        return self.mu_global if s is None else s[0] / s[1]

    def experience(self, person: str) -> int:
        s = self.person_stats.get(person)
        return 0 if s is None else s[1]


def fit_reputation(column, y, separator: str = DEFAULT_SEPARATOR) -> ReputationTable:
    y = np.asarray(y, dtype=float)
    cells = _cells(column)
    if len(cells) != len(y):
        raise DataError(f"entity column has {len(cells)} rows but target has {len(y)}")
    if len(y) == 0:
        raise DataError("cannot fit reputation on zero rows")
    stats: dict = {}
    for cell, t in zip(cells, y):
        for p in dict.fromkeys(split_tokens(cell, separator)):
            s, c = stats.get(p, (0.0, 0))
            stats[p] = (s + t, c + 1)
    return ReputationTable(stats, float(np.mean(y)), separator)


def reputation_features(table: ReputationTable, column, name: str = "reputation") -> FeatureBlock:
    """Two columns: mean member reputation and mean member experience."""
    cells = _cells(column)
    out = np.empty((len(cells), 2))
    empty = 0
    for r, cell in enumerate(cells):
        people = split_tokens(cell, table.separator)
        if not people:
            empty += 1
            out[r] = (table.mu_global, 0.0)
            continue
        out[r, 0] = math.fsum(table.reputation(p) for p in people) / len(people)
        out[r, 1] = sum(table.experience(p) for p in people) / len(people)
    if empty:
        log.info("reputation %s: %d empty cells mapped to (mu_global, 0)", name, empty)
    return FeatureBlock(name, out, "reputation", {"empty_cells": empty, "columns": [f"{name}_mean", f"{name}_experience"]})


# embeddings -----------------------------------------------------------------

def write_embeddings(path, matrix, row_ids: Iterable | None = None) -> None:
    """Binary layout: uint32 rows, uint32 width, then float32 little-endian rows."""
    M = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    path = Path(path)
    path.write_bytes(struct.pack("<II", *M.shape) + M.tobytes())
    if row_ids is not None:
        Path(str(path) + ".ids").write_text("".join(f"{i}\n" for i in row_ids), encoding="utf-8")


def load_embeddings(path, expected_width: int | None = None, row_ids: Sequence | None = None,
                    name: str | None = None, provenance: str = "embedding-title") -> FeatureBlock:
    """Load a precomputed embedding block; rows are reordered to ``row_ids`` when given."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        ids, M = _read_embedding_csv(path)
    else:
        blob = path.read_bytes()
        if len(blob) < 8:
            raise DataError(f"{path}: embedding file shorter than its 8-byte header")
        n, w = struct.unpack("<II", blob[:8])
        if len(blob) != 8 + 4 * n * w:
            raise DataError(f"{path}: header declares {n}x{w} floats but payload holds {(len(blob) - 8) // 4}")
        M = np.frombuffer(blob, dtype="<f4", offset=8).reshape(n, w).astype(float)
        side = Path(str(path) + ".ids")
        ids = side.read_text(encoding="utf-8").split() if side.exists() else None
    if expected_width is not None and M.shape[1] != expected_width:
        raise DataError(f"{path}: embedding width {M.shape[1]} differs from declared {expected_width}")
    if row_ids is not None:
        want = [str(r) for r in row_ids]
        if ids is None:
            if len(want) != M.shape[0]:
                raise DataError(f"{path}: {M.shape[0]} embedding rows but table has {len(want)} rows")
        else:
            pos = {r: i for i, r in enumerate(ids)}
            missing = [r for r in want if r not in pos]
            if missing:
                raise DataError(f"{path}: {len(missing)} table rows have no embedding (first: {missing[0]!r})")
            M = M[[pos[r] for r in want]]
    return FeatureBlock(name or path.stem, M, provenance, {"source": str(path)})


def _read_embedding_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return None, np.zeros((0, 0))
    header = rows[0]
    has_ids = bool(header) and header[0] == "row_id"
    body = rows[1:] if has_ids or not _numeric(header) else rows
    ids = [r[0] for r in body] if has_ids else None
    vals = [r[1:] if has_ids else r for r in body]
    widths = {len(v) for v in vals}
    if len(widths) > 1:
        raise DataError(f"{path}: ragged embedding rows")
    return ids, np.array(vals, dtype=float).reshape(len(vals), widths.pop() if widths else 0)


def _numeric(row) -> bool:
    try:
        [float(x) for x in row]
        return True
    except ValueError:
        return False


# assembly -------------------------------------------------------------------

@dataclass(frozen=True)
class Assembly:
    matrix: np.ndarray
    offsets: tuple  # (name, start, stop)

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def block(self, name: str) -> np.ndarray:
        for n, a, b in self.offsets:
            if n == name:
                return self.matrix[:, a:b]
        raise KeyError(name)


def assemble(blocks: Sequence[FeatureBlock | Assembly]) -> Assembly:
    """Concatenate blocks column-wise in the given order, recording offsets."""
    if not blocks:
        raise ConfigError("nothing to assemble")
    parts, offsets, start = [], [], 0
    n = None
    for b in blocks:
        mat = b.matrix
        if n is None:
            n = mat.shape[0]
        elif mat.shape[0] != n:
            bname = getattr(b, "name", "assembly")
            raise DataError(f"block {bname!r} has {mat.shape[0]} rows, expected {n}")
        items = b.offsets if isinstance(b, Assembly) else ((b.name, 0, b.width),)
        for name, a, z in items:
            offsets.append((name, start + a, start + z))
        start += mat.shape[1]
        parts.append(mat)
    return Assembly(np.hstack(parts), tuple(offsets))


def numeric_block(table: pd.DataFrame, columns: Sequence[str], log_columns: Sequence[str] = (),
                  name: str = "numeric") -> FeatureBlock:
    cols = []
    for c in columns:
        v = pd.to_numeric(table[c], errors="coerce").to_numpy(dtype=float)
        if np.isnan(v).any():
            v = np.where(np.isnan(v), np.nanmedian(v) if np.isfinite(v).any() else 0.0, v)
        cols.append(log1p_transform(v) if c in log_columns else v)
    M = np.column_stack(cols) if cols else np.zeros((len(table), 0))
    return FeatureBlock(name, M, "numeric", {"columns": list(columns)})

