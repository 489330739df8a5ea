from __future__ import annotations

from ..errors import InvariantError
from ..searchspace import SearchSpace
from .base import Evaluator, Objective, OptimizeResult, best_of


def run_grid(space: SearchSpace, objective: Objective, cv_folds: int | None = None,
             seed: int = 0, jobs: int = 1) -> OptimizeResult:
    """Evaluate every valid grid candidate exactly once.

    ``cv_folds`` is only used for budget accounting: when given, every
    successful report must declare that many model fits.
    """
    grid = space.enumerate_grid()
    ev = Evaluator(objective, seed, "grid", jobs=jobs, use_cache=False)
    ev.evaluate(grid, generation=0)
    result = OptimizeResult("grid", best_of(ev.history), ev.history,
                            {"grid_size": len(grid), "cv_folds": cv_folds})
    if cv_folds is not None:
        bad = [t.trial_index for t in ev.history if t.report.error is None and t.report.n_model_fits != cv_folds]
        if bad:
            raise InvariantError(f"trials {bad[:5]} report a fit count different from cv_folds={cv_folds}")
    return result
