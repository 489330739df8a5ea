"""Structured-domain preprocessing: stratified nested sampling, hold-out
splits, standardisation and a frozen PCA projector."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import container
from .dataset import Dataset, as_dataset
from .errors import ConfigError, DataError
from .rng import derive_rng

log = logging.getLogger(__name__)

DEFAULT_RHOS = (0.02, 0.08, 0.15, 0.30, 0.45)
EIGH_MAX_COLS = 2000


# sampling ------------------------------------------------------------------

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def largest_remainder(counts: Sequence[int], total: int) -> np.ndarray:
    """Apportion ``total`` seats proportionally to ``counts`` (Hamilton's method).

    Leftover seats go to the largest fractional remainders; ties favour the
    earlier entry.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if n == 0:
        return np.zeros_like(counts)
    quota_num = counts * total  # exact integer numerators of quota * n
    base = quota_num // n
    rem = quota_num - base * n
    left = total - int(base.sum())
    order = sorted(range(len(counts)), key=lambda i: (-int(rem[i]), i))
    out = base.copy()
    for i in order[:left]:
        out[i] += 1
    return out


@dataclass(frozen=True)
class SamplingPlan:
    rhos: tuple = DEFAULT_RHOS
    seed: int = 0

    def __post_init__(self):
        r = tuple(float(x) for x in self.rhos)
        if not r:
            raise ConfigError("sampling plan needs at least one fraction")
        if any(not 0 < x <= 1 for x in r):
            raise ConfigError("every sampling fraction must lie in (0, 1]")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ConfigError("sampling fractions must be strictly increasing")
        object.__setattr__(self, "rhos", r)


def _class_orders(data: Dataset, seed: int) -> dict:
    # one shuffle per class, independent of rho: this is what makes samples nest
    return {c: derive_rng(seed, "stratified", repr(c.item() if hasattr(c, "item") else c)).permutation(rows)
            for c, rows in data.class_index.items()}


def stratified_indices(data: Dataset, rho: float, seed: int = 0, _orders=None) -> np.ndarray:
    if not 0 < rho <= 1:
        raise ConfigError("rho must lie in (0, 1]")
    idx = data.class_index
    total = round_half_up(rho * data.n_rows)
    if total < len(idx):
        raise DataError(f"rho={rho} keeps {total} of {data.n_rows} rows, fewer than the {len(idx)} classes")
    classes = list(idx)
    quotas = largest_remainder([len(idx[c]) for c in classes], total)
    orders = _orders if _orders is not None else _class_orders(data, seed)
    picked = [orders[c][:q] for c, q in zip(classes, quotas)]
    return np.sort(np.concatenate(picked)) if picked else np.arange(0)


def stratified_sample(data: Dataset, rho: float, rng=0) -> Dataset:
    """Class-proportional subsample of ``round(rho * n)`` rows in original order.

    ``rng`` is an integer seed; samples drawn with the same seed nest as
    ``rho`` grows.
    """
    return data.subset(stratified_indices(data, rho, _seed(rng)))


def _seed(rng) -> int:
    if isinstance(rng, np.random.Generator):
        raise ConfigError("stratified sampling needs an integer seed so samples nest across rho")
    return int(rng)


@dataclass
class PlanResult:
    plan: SamplingPlan
    indices: dict = field(default_factory=dict)
    nested: bool = True


def sample_plan(data: Dataset, plan: SamplingPlan) -> PlanResult:
    orders = _class_orders(data, plan.seed)
    out = PlanResult(plan)
    prev = None
    for rho in plan.rhos:
        cur = stratified_indices(data, rho, plan.seed, orders)
        if prev is not None and not np.isin(prev, cur).all():
            # only possible with three or more classes (apportionment paradox)
            out.nested = False
            log.warning("sample for rho=%s is not a superset of the previous one", rho)
        out.indices[rho] = cur
        prev = cur
    return out


# hold-out ------------------------------------------------------------------

def holdout_indices(data: Dataset, train_fraction: float = 0.8, rng=0, task: str = "classification"):
    """Returns ``(train_idx, test_idx, warnings)``; both index arrays are sorted."""
    if not 0 < train_fraction <= 1:
        raise ConfigError("train_fraction must lie in (0, 1]")
    seed = _seed(rng) if not isinstance(rng, np.random.Generator) else int(rng.integers(2**63))
    warnings = []
    n = data.n_rows
    if task == "regression":
        perm = derive_rng(seed, "holdout").permutation(n)
        n_tr = round_half_up(train_fraction * n)
        tr, te = perm[:n_tr], perm[n_tr:]
    else:
        idx = data.class_index
        classes = list(idx)
        quotas = largest_remainder([len(idx[c]) for c in classes], round_half_up(train_fraction * n))
        tr_parts, te_parts = [], []
        for c, q in zip(classes, quotas):
            rows = idx[c]
            if len(rows) == 1:
                warnings.append(f"class {c!r} has a single row; assigned to train")
                q = 1
            perm = derive_rng(seed, "holdout", repr(c.item() if hasattr(c, "item") else c)).permutation(rows)
            tr_parts.append(perm[:q])
            te_parts.append(perm[q:])
        tr = np.concatenate(tr_parts) if tr_parts else np.arange(0)
        te = np.concatenate(te_parts) if te_parts else np.arange(0)
    if len(te) == 0:
        warnings.append("test set is empty")
    for w in warnings:
        log.warning(w)
    return np.sort(tr), np.sort(te), warnings


def holdout_split(data: Dataset, train_fraction: float = 0.8, rng=0, task: str = "classification"):
    tr, te, _ = holdout_indices(data, train_fraction, rng, task)
    return data.subset(tr), data.subset(te)


# standardisation -----------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray  # 0 marks constant columns

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = _dense(X)
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        # treat numerically-constant columns as constant
        sd = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(mu)), sd, 0.0)
        return cls(mu, sd)

    def transform(self, X):
        if isinstance(X, Dataset):
            return X.with_X(self.transform(X.X), X.feature_names)
        X = _dense(X)
        if X.shape[1] != len(self.mean):
            raise DataError(f"dimension mismatch: standardizer fit on {len(self.mean)} columns, got {X.shape[1]}")
        safe = np.where(self.scale > 0, self.scale, 1.0)
        return np.where(self.scale > 0, (X - self.mean) / safe, 0.0)

    def save(self, path):
        container.save(path, "standardizer", {}, {"mean": self.mean, "scale": self.scale})

    @classmethod
    def load(cls, path):
        _, _, a = container.load(path, "standardizer")
        return cls(a["mean"], a["scale"])


def standardize(train) -> Standardizer:
    return Standardizer.fit(train)


def _dense(X) -> np.ndarray:
    if isinstance(X, Dataset):
        return X.dense()
    if hasattr(X, "toarray"):
        return as_dataset(X).dense()
    return np.asarray(X, dtype=float)


# PCA -----------------------------------------------------------------------

@dataclass(frozen=True)
class FittedProjector:
    mean: np.ndarray
    components: np.ndarray  # n_cols x k, orthonormal columns
    explained_variance: np.ndarray
    total_variance: float
    fitted_on: str = ""

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def save(self, path):
        container.save(path, "projector", {"fitted_on": self.fitted_on, "total_variance": self.total_variance},
                       {"mean": self.mean, "components": self.components,
                        "explained_variance": self.explained_variance})

    @classmethod
    def load(cls, path) -> "FittedProjector":
        _, meta, a = container.load(path, "projector")
        return cls(a["mean"], a["components"], a["explained_variance"], float(meta["total_variance"]),
                   meta["fitted_on"])


def _sign_fix(W: np.ndarray) -> np.ndarray:
    if W.size == 0:
        return W
    pos = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[pos, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs


def _randomized_eig(Xc: np.ndarray, k: int, rng, n_iter: int = 7, oversample: int = 10):
    n, d = Xc.shape
    q = min(d, n, k + oversample)
    Q = np.linalg.qr(Xc.T @ rng.normal(size=(n, q)))[0]  # d x q
    for _ in range(n_iter):
        Q = np.linalg.qr(Xc.T @ (Xc @ Q))[0]
    B = Xc @ Q  # n x q
    small = (B.T @ B) / max(n - 1, 1)
    vals, vecs = np.linalg.eigh(small)
    order = np.argsort(vals)[::-1][:k]
    return vals[order], Q @ vecs[:, order]


def fit_projector(data, k: int | None = None, variance: float = 0.95, fitted_on: str = "",
                  seed: int = 0) -> FittedProjector:
    """PCA on the mean-centred covariance.

    Pass ``k`` for a fixed number of components, otherwise the smallest ``k``
    whose cumulative explained variance reaches ``variance``.
    """
    X = _dense(data)
    n, d = X.shape
    if n == 0:
        raise DataError("cannot fit a projector on zero rows")
    limit = min(n, d)
    if k is not None and not 1 <= k <= limit:
        raise ConfigError(f"k={k} must lie in [1, min(n_rows, n_cols)={limit}]")
    if k is None and not 0 < variance <= 1:
        raise ConfigError("variance fraction must lie in (0, 1]")
    mean = X.mean(axis=0)
    Xc = X - mean
    total = float((Xc * Xc).sum()) / max(n - 1, 1)
    if d <= EIGH_MAX_COLS:
        cov = (Xc.T @ Xc) / max(n - 1, 1)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals, kind="stable")[::-1]
        vals, vecs = np.maximum(vals[order], 0.0), vecs[:, order]
    else:
        want = k if k is not None else min(limit, 200)
        vals, vecs = _randomized_eig(Xc, want, derive_rng(seed, "pca"))
        vals = np.maximum(vals, 0.0)
    if k is None:
        if total <= 0:
            k = 1
        else:
            cum = np.cumsum(vals) / total
            hit = np.flatnonzero(cum >= variance - 1e-12)
            k = int(hit[0]) + 1 if hit.size else len(vals)
    vals, W = vals[:k], _sign_fix(vecs[:, :k])
    return FittedProjector(mean, np.ascontiguousarray(W), vals.copy(), total, fitted_on)


def project(proj: FittedProjector, data):
    """``(X - mean) @ W``, accumulated feature by feature so each output row
    depends only on its input row (single-row and batch results agree bit for bit)."""
    if isinstance(data, Dataset):
        return data.with_X(project(proj, data.X), [f"pc{i}" for i in range(proj.k)])
    X = _dense(data)
    if X.ndim != 2 or X.shape[1] != len(proj.mean):
        raise DataError(f"dimension mismatch: projector expects {len(proj.mean)} columns, got {X.shape[-1]}")
    out = np.zeros((X.shape[0], proj.k))
    W = proj.components
    for j in range(X.shape[1]):
        out += (X[:, j:j + 1] - proj.mean[j]) * W[j]
    return out


def fit_transform(data, k: int | None = None, variance: float = 0.95, fitted_on: str = ""):
    proj = fit_projector(data, k, variance, fitted_on)
    return proj, project(proj, data)
