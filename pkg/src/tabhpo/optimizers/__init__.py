"""Black-box hyperparameter optimizers: grid, GA, adaptive GA, annealing, TPE."""

from .base import Evaluator, FitnessReport, OptimizeResult, TrialRecord, best_of
from .ga import (
    CROSSOVER_OPS,
    MUTATION_OPS,
    OperatorWeights,
    run_adaptive_ga,
    run_ga,
    update_operator_weights,
    weight_rule,
)
from .grid import run_grid
from .sa import AnnealState, acceptance_probability, neighbor, run_sa
from .tpe import TpeState, run_tpe, tpe_acquisition

__all__ = [
    "AnnealState", "CROSSOVER_OPS", "Evaluator", "FitnessReport", "MUTATION_OPS", "OperatorWeights",
    "OptimizeResult", "TpeState", "TrialRecord", "acceptance_probability", "best_of", "neighbor",
    "run_adaptive_ga", "run_ga", "run_grid", "run_sa", "run_tpe", "tpe_acquisition",
    "update_operator_weights", "weight_rule",
]
