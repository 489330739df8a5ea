"""Trial bookkeeping shared by every optimizer."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ..rng import derive_rng
from ..searchspace import INACTIVE, Candidate, SearchSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitnessReport:
    fitness: float
    per_fold_metrics: tuple = ()
    n_model_fits: int = 1
    error: str | None = None

    @classmethod
    def failed(cls, message: str) -> "FitnessReport":
        return cls(-math.inf, (), 0, message)


@dataclass(frozen=True)
class TrialRecord:
    candidate: Candidate
    report: FitnessReport
    trial_index: int
    generation: int | None = None
    operator_used: str | None = None
    wall_ms: float = 0.0

    @property
    def fitness(self) -> float:
        return self.report.fitness


@dataclass
class OptimizeResult:
    method: str
    best: TrialRecord
    history: list[TrialRecord]
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def n_model_fits(self) -> int:
        return sum(t.report.n_model_fits for t in self.history)

    def history_csv(self, space: SearchSpace, include_timing: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["trial_index", "generation", "operator_used", *space.names, "fitness", "n_fits"]
        if include_timing:
            header.append("wall_ms")
        writer.writerow(header)
        for t in self.history:
            row = [
                t.trial_index,
                "" if t.generation is None else t.generation,
                t.operator_used or "",
                *(format_param(t.candidate.get(n, INACTIVE)) for n in space.names),
                repr(float(t.fitness)),
                t.report.n_model_fits,
            ]
            if include_timing:
                row.append(f"{t.wall_ms:.3f}")
            writer.writerow(row)
        return buf.getvalue()


def format_param(v) -> str:
    if v is INACTIVE:
        return ""
    if isinstance(v, tuple):
        return "[" + ",".join(str(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


Objective = Callable[[Candidate, np.random.Generator], "FitnessReport | float"]


def best_of(history: Sequence[TrialRecord]) -> TrialRecord:
    """Highest fitness; ties go to the lowest trial index."""
    if not history:
        raise ValueError("empty history")
    return max(history, key=lambda t: (t.fitness, -t.trial_index))


class Evaluator:
    """Runs an objective with per-candidate random streams and a result cache.

    Streams are derived from ``(seed, method, generation, slot)`` so results do
    not depend on how many worker threads evaluate a batch.
    """

    def __init__(self, objective: Objective, seed: int, method: str, jobs: int = 1, use_cache: bool = True):
        self.objective = objective
        self.seed = seed
        self.method = method
        self.jobs = max(1, int(jobs))
        self.use_cache = use_cache
        self.cache: dict[Candidate, FitnessReport] = {}
        self.history: list[TrialRecord] = []

    def _call(self, cand: Candidate, generation: int, slot: int) -> tuple[FitnessReport, float]:
        rng = derive_rng(self.seed, self.method, generation, slot)
        start = time.perf_counter()
        try:
            out = self.objective(cand, rng)
            report = out if isinstance(out, FitnessReport) else FitnessReport(float(out))
            if not math.isfinite(report.fitness):
                report = FitnessReport.failed(f"non-finite fitness {report.fitness!r}")
        except Exception as exc:  # noqa: BLE001 - a failed candidate must not stop the search
            log.warning("candidate %r failed: %s", cand, exc)
            report = FitnessReport.failed(f"{type(exc).__name__}: {exc}")
        return report, (time.perf_counter() - start) * 1000.0

    def evaluate(
        self,
        cands: Sequence[Candidate],
        generation: int = 0,
        operators: Sequence[str | None] | None = None,
        record_cached: bool = False,
    ) -> list[FitnessReport]:
        """Evaluate a batch; fresh evaluations are appended to the history in slot order."""
        operators = list(operators) if operators is not None else [None] * len(cands)
        fresh: dict[Candidate, int] = {}
        for slot, c in enumerate(cands):
            if self.use_cache and c in self.cache:
                continue
            if c not in fresh or not self.use_cache:
                fresh.setdefault(c, slot)
        pending = sorted(fresh.items(), key=lambda kv: kv[1])
        if self.jobs > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                results = list(pool.map(lambda kv: self._call(kv[0], generation, kv[1]), pending))
        else:
            results = [self._call(c, generation, slot) for c, slot in pending]
        new_reports = {}
        for (c, slot), (report, ms) in zip(pending, results):
            new_reports[slot] = (report, ms)
            if self.use_cache:
                self.cache[c] = report
        out = []
        for slot, c in enumerate(cands):
            if slot in new_reports:
                report, ms = new_reports[slot]
                self._record(c, report, generation, operators[slot], ms)
            else:
                report = self.cache[c] if self.use_cache else new_reports[fresh[c]][0]
                if record_cached:
                    self._record(c, FitnessReport(report.fitness, report.per_fold_metrics, 0, report.error),
                                 generation, operators[slot] or "cached", 0.0)
            out.append(report)
        return out

    def _record(self, cand, report, generation, operator, ms):
        self.history.append(
            TrialRecord(cand, report, len(self.history), generation, operator, ms)
        )

    def evaluate_one(self, cand: Candidate, generation: int = 0, operator: str | None = None) -> FitnessReport:
        return self.evaluate([cand], generation, [operator], record_cached=True)[0]
