"""Tree-structured Parzen estimator.

Observed trials are split at a fitness quantile into a good set and a bad
set.  Each active dimension gets two independent 1-D densities, ``l`` from
the good set and ``g`` from the bad set; candidates are drawn from ``l``
and the one maximising the product of per-dimension ``l/g`` is evaluated.

Numeric dimensions use truncated Gaussian kernels with adaptive,
neighbour-distance bandwidths (in log space for log-uniform dimensions);
categorical ones use add-one smoothed frequencies.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from ..rng import derive_rng
from ..searchspace import INACTIVE, Candidate, ParamDim, SearchSpace
from .base import Evaluator, Objective, OptimizeResult, TrialRecord, best_of

log = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12


def _to_internal(dim: ParamDim, v: float) -> float:
    return math.log(v) if dim.kind == "loguniform" else float(v)


def _bounds(dim: ParamDim) -> tuple[float, float]:
    if dim.kind == "loguniform":
        return math.log(dim.lo), math.log(dim.hi)
    if dim.kind == "int":
        return dim.lo - 0.5, dim.hi + 0.5
    return dim.lo, dim.hi


class UniformDensity:
    """Dimension-wide uniform prior; contributes a factor 1 when on both sides."""

    def __init__(self, dim: ParamDim):
        self.dim = dim
        if dim.kind == "categorical":
            self._p = 1.0 / len(dim.values)
        else:
            lo, hi = _bounds(dim)
            self._p = 1.0 / (hi - lo)

    def pdf(self, v) -> float:
        return self._p

    def sample(self, rng):
        return self.dim.sample(rng)


class CategoricalDensity:
    def __init__(self, dim: ParamDim, observed: Sequence):
        counts = np.ones(len(dim.values))
        for v in observed:
            counts[dim.index_of(v)] += 1
        self.dim = dim
        self.probs = counts / counts.sum()

    def pdf(self, v) -> float:
        return float(self.probs[self.dim.index_of(v)])

    def sample(self, rng):
        return self.dim.values[int(rng.choice(len(self.probs), p=self.probs))]


class ParzenDensity:
    """Equal-weight mixture of Gaussians truncated to the dimension bounds.

    Each kernel's width is the larger gap to its sorted neighbours, floored
    at ``width / (1 + n)**2`` so the mixture sharpens as evidence accumulates.
    """

    def __init__(self, dim: ParamDim, observed: Sequence[float]):
        self.dim = dim
        self.lo, self.hi = _bounds(dim)
        mus = np.array([_to_internal(dim, v) for v in observed], dtype=float)
        n = len(mus)
        width = self.hi - self.lo
        order = np.argsort(mus, kind="stable")
        gaps = np.diff(mus[order])
        spread = np.empty(n)
        spread[order] = np.maximum(np.r_[gaps[0], gaps], np.r_[gaps, gaps[-1]])
        floor = width / min(1000.0, (1.0 + n) ** 2)
        self.mus = mus
        self.sigmas = np.clip(spread, floor, width)
        self._cdf_a = ndtr((self.lo - mus) / self.sigmas)
        self._mass = np.maximum(ndtr((self.hi - mus) / self.sigmas) - self._cdf_a, DENSITY_FLOOR)

    def pdf(self, v) -> float:
        x = _to_internal(self.dim, v)
        z = (x - self.mus) / self.sigmas
        dens = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigmas) / self._mass
        return float(dens.mean())

    def sample(self, rng):
        k = int(rng.integers(len(self.mus)))
        u = self._cdf_a[k] + rng.random() * self._mass[k]
        z = ndtri(np.clip(u, 1e-300, 1 - 1e-16))
        x = float(np.clip(self.mus[k] + self.sigmas[k] * z, self.lo, self.hi))
        if self.dim.kind == "loguniform":
            return float(np.clip(math.exp(x), self.dim.lo, self.dim.hi))
        if self.dim.kind == "int":
            return int(np.clip(round(x), self.dim.lo, self.dim.hi))
        return x


def fit_density(dim: ParamDim, observed: Sequence, side: str = ""):
    if dim.kind == "categorical":
        return CategoricalDensity(dim, observed)
    if len(observed) < 2 or len(set(observed)) < 2:
        log.info("tpe: degenerate %s density for %r (%d points); using uniform", side, dim.name, len(observed))
        return UniformDensity(dim)
    return ParzenDensity(dim, observed)


@dataclass
class TpeState:
    space: SearchSpace
    history: list[TrialRecord]
    gamma_quantile: float = 0.25
    n_startup: int = 5
    n_candidates_per_iter: int = 24
    threshold: float = field(init=False)
    good: list[TrialRecord] = field(init=False)
    bad: list[TrialRecord] = field(init=False)
    l: dict = field(init=False)
    g: dict = field(init=False)

    def __post_init__(self):
        if len(self.history) < 2:
            raise ValueError("TPE needs at least two observed trials to split")
        ranked = sorted(self.history, key=lambda t: (-t.fitness, t.trial_index))
        n_good = min(max(1, math.ceil(self.gamma_quantile * len(ranked))), len(ranked) - 1)
        self.good = ranked[:n_good]
        self.bad = ranked[n_good:]
        self.threshold = self.good[-1].fitness
        self.l = self._densities(self.good, "good")
        self.g = self._densities(self.bad, "bad")

    def _densities(self, trials, side):
        out = {}
        for dim in self.space.dims:
            vals = [t.candidate[dim.name] for t in trials if t.candidate[dim.name] is not INACTIVE]
            out[dim.name] = fit_density(dim, vals, side) if vals else UniformDensity(dim)
        return out

    def acquisition(self, cand: Candidate) -> float:
        return tpe_acquisition(self, cand)

    def sample_good(self, rng: np.random.Generator) -> Candidate:
        partial: dict = {}
        for dim in self.space.dims:
            if self.space.is_active(dim.name, partial):
                partial[dim.name] = self.l[dim.name].sample(rng)
            else:
                partial[dim.name] = INACTIVE
        return Candidate((n, partial[n]) for n in self.space.names)


def tpe_acquisition(state: TpeState, cand: Candidate) -> float:
    """Product over active dims of l_d(v) / g_d(v)."""
    ratio = 1.0
    for name in state.space.active_names(cand):
        v = cand[name]
        ratio *= max(state.l[name].pdf(v), DENSITY_FLOOR) / max(state.g[name].pdf(v), DENSITY_FLOOR)
    return ratio


def run_tpe(space: SearchSpace, objective: Objective, n_trials: int = 15, n_startup: int = 5,
            gamma_quantile: float = 0.25, n_candidates: int = 24, seed: int = 0) -> OptimizeResult:
    """Sequential model-based search; ``n_startup == n_trials`` is pure random search."""
    if not 1 <= n_startup <= n_trials:
        raise ValueError("need 1 <= n_startup <= n_trials")
    if not 0 < gamma_quantile < 1:
        raise ValueError("gamma_quantile must lie in (0, 1)")
    rng = derive_rng(seed, "tpe", "startup")
    model_rng = derive_rng(seed, "tpe", "model")
    ev = Evaluator(objective, seed, "tpe")
    thresholds = []
    for t in range(n_trials):
        if t < n_startup or len(ev.history) < 2:
            cand, tag = space.sample(rng), "startup"
        else:
            state = TpeState(space, list(ev.history), gamma_quantile, n_startup, n_candidates)
            thresholds.append(state.threshold)
            pool = [state.sample_good(model_rng) for _ in range(n_candidates)]
            scores = [state.acquisition(c) for c in pool]
            cand, tag = pool[int(np.argmax(scores))], "tpe"
        ev.evaluate_one(cand, t, tag)
    return OptimizeResult("tpe", best_of(ev.history), ev.history, {"thresholds": thresholds})
