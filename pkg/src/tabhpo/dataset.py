from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError

DENSIFY_LIMIT = 50_000_000  # cells


@dataclass
class Dataset:
    """Feature matrix (dense ndarray or CSR) with labels and row ids.

    ``y`` holds class tokens for classification or reals for regression.
    ``row_ids`` default to ``0..n-1`` and survive subsetting, so samples can
    always be traced back to source rows.
    """

    X: np.ndarray | sp.csr_matrix
    y: np.ndarray
    row_ids: np.ndarray | None = None
    feature_names: Sequence[str] | None = None
    _class_index: dict | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if sp.issparse(self.X):
            self.X = sp.csr_matrix(self.X)
        else:
            self.X = np.asarray(self.X, dtype=float)
            if self.X.ndim == 1:
                self.X = self.X.reshape(-1, 1) if len(self.X) else self.X.reshape(0, 0)
        self.y = np.asarray(self.y)
        if self.X.shape[0] != len(self.y):
            raise DataError(f"X has {self.X.shape[0]} rows but y has {len(self.y)} labels")
        if self.row_ids is None:
            self.row_ids = np.arange(len(self.y))
        else:
            self.row_ids = np.asarray(self.row_ids)
            if len(self.row_ids) != len(self.y):
                raise DataError("row_ids length differs from the number of rows")
        if self.feature_names is not None and len(self.feature_names) != self.X.shape[1]:
            raise DataError("feature_names length differs from the number of columns")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.X)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.y)

    @property
    def class_index(self) -> dict:
        """Mapping class -> sorted positional row indices; partitions the rows."""
        if self._class_index is None:
            self._class_index = {c: np.flatnonzero(self.y == c) for c in self.classes}
        return self._class_index

    def dense(self, limit: int = DENSIFY_LIMIT) -> np.ndarray:
        if not self.is_sparse:
            return self.X
        cells = self.n_rows * self.n_cols
        if cells > limit:
            raise DataError(f"refusing to densify a {self.n_rows}x{self.n_cols} sparse matrix (> {limit} cells)")
        return np.asarray(self.X.toarray(), dtype=float)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.row_ids[idx], self.feature_names)

    def with_X(self, X, feature_names=None) -> "Dataset":
        return Dataset(X, self.y, self.row_ids, feature_names)


def as_dataset(X, y=None) -> Dataset:
    if isinstance(X, Dataset):
        return X
    X = X if sp.issparse(X) else np.asarray(X, dtype=float)
    return Dataset(X, np.zeros(X.shape[0]) if y is None else y)
