"""Dataset ingestion: headed CSV tables and svmlight/libsvm sparse files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .dataset import Dataset
from .errors import ConfigError, DataError

FORMATS = ("csv", "svmlight")


def read_table(path) -> pd.DataFrame:
    """Read a headed UTF-8 CSV, rejecting rows whose field count differs from the header."""
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return pd.DataFrame()
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: line 1: {exc}") from None
        rows = []
        try:
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}: line {reader.line_num}: expected {len(header)} fields, "
                                    f"found {len(row)}")
                rows.append(row)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from None
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    table = pd.DataFrame(rows, columns=header, dtype=object)
    for col in table.columns:
        conv = pd.to_numeric(table[col], errors="coerce")
        blank = table[col] == ""
        if not conv[~blank].isna().any() and (~blank).any():
            table[col] = conv
    return table


def _svmlight_label(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise DataError(f"{where}: bad label {tok!r}") from None


def read_svmlight(path, n_features: int | None = None) -> Dataset:
    """``label idx:val ...`` lines with 1-based indices; ``#`` starts a comment.

    Labels drawn from {-1, +1} become {0, 1}; other integral labels are kept
    as integers and non-integral ones as floats (regression targets).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8: {exc}") from None
    labels, indptr, indices, values = [], [0], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{path}: line {lineno}"
        parts = body.split()
        labels.append(_svmlight_label(parts[0], where))
        last = 0
        for tok in parts[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise DataError(f"{where}: expected idx:value, got {tok!r}")
            if key == "qid":
                continue
            try:
                idx, v = int(key), float(val)
            except ValueError:
                raise DataError(f"{where}: expected idx:value, got {tok!r}") from None
            if idx < 1:
                raise DataError(f"{where}: feature indices are 1-based, got {idx}")
            if idx <= last:
                raise DataError(f"{where}: feature indices must be strictly increasing")
            if not np.isfinite(v):
                raise DataError(f"{where}: non-finite value for feature {idx}")
            last = idx
            indices.append(idx - 1)
            values.append(v)
        indptr.append(len(indices))
    width = max(indices) + 1 if indices else 0
    if n_features is not None:
        if width > n_features:
            raise DataError(f"{path}: feature index {width} exceeds n_features={n_features}")
        width = n_features
    X = sp.csr_matrix((np.array(values, dtype=float), np.array(indices, dtype=np.int64),
                       np.array(indptr, dtype=np.int64)), shape=(len(labels), width))
    lab = np.array(labels, dtype=float)
    if lab.size and set(np.unique(lab)) <= {-1.0, 1.0}:
        y = ((lab + 1) // 2).astype(np.int64)
    elif lab.size and np.all(lab == np.round(lab)):
        y = lab.astype(np.int64)
    else:
        y = lab if lab.size else np.zeros(0, dtype=np.int64)
    return Dataset(X, y, feature_names=[f"f{j}" for j in range(width)])


def table_to_dataset(table: pd.DataFrame, target: str | None = None, id_column: str | None = None) -> Dataset:
    """Numeric design matrix from a table; the target defaults to the last column."""
    if table.shape[1] == 0:
        return Dataset(np.zeros((0, 0)), np.zeros(0))
    target = target or table.columns[-1]
    if target not in table.columns:
        raise ConfigError(f"target column {target!r} not found (columns: {list(table.columns)})")
    drop = [target] + ([id_column] if id_column else [])
    feats = table.drop(columns=drop)
    for col in feats.columns:
        if not pd.api.types.is_numeric_dtype(feats[col]):
            raise DataError(f"column {col!r} is not numeric; declare a schema role and run `encode`")
    X = feats.to_numpy(dtype=float) if len(feats) else np.zeros((0, feats.shape[1]))
    if np.isnan(X).any():
        col = feats.columns[int(np.argwhere(np.isnan(X))[0][1])]
        raise DataError(f"column {col!r} has missing values")
    row_ids = table[id_column].to_numpy() if id_column else None
    return Dataset(X, table[target].to_numpy(), row_ids=row_ids, feature_names=list(feats.columns))


def load_dataset(path, format: str = "csv", target: str | None = None, n_features: int | None = None,
                 id_column: str | None = None) -> Dataset:
    if format not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {format!r}")
    if format == "svmlight":
        return read_svmlight(path, n_features)
    return table_to_dataset(read_table(path), target, id_column)
