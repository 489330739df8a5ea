"""Simulated annealing over a mixed search space."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..rng import derive_rng
from ..searchspace import Candidate, SearchSpace
from .base import Evaluator, Objective, OptimizeResult, best_of

ACCEPT_AT_MEDIAN = 0.8
N_PROBES = 20


@dataclass(frozen=True)
class AnnealState:
    current: Candidate
    current_fitness: float
    temperature: float
    step: int


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis rule for maximisation: always take improvements."""
    if delta >= 0:
        return 1.0
    if temperature <= 0:
        return 0.0
    return math.exp(delta / temperature)


def neighbor(space: SearchSpace, cand: Candidate, rng: np.random.Generator,
             categorical_move: str = "adjacent") -> Candidate:
    """Perturb one uniformly chosen active dimension.

    Numeric moves are bounded to +-10% of the range, log-uniform moves to a
    factor of ten, both clamped to the bounds.  Categorical values step to a
    neighbouring position in the declared order (``"adjacent"``) or are
    redrawn from the other values (``"redraw"``).
    """
    genome = list(space.encode(cand))
    active = space.active_positions(genome)
    pos = active[int(rng.integers(len(active)))]
    dim = space.dims[pos]
    v = genome[pos]
    if dim.kind == "uniform":
        v = float(np.clip(v + rng.uniform(-0.1, 0.1) * (dim.hi - dim.lo), dim.lo, dim.hi))
    elif dim.kind == "int":
        step = int(round(rng.uniform(-0.1, 0.1) * (dim.hi - dim.lo)))
        if step == 0:
            step = 1 if rng.random() < 0.5 else -1
        v = int(np.clip(v + step, dim.lo, dim.hi))
    elif dim.kind == "loguniform":
        v = float(np.clip(v * 10.0 ** rng.uniform(-1.0, 1.0), dim.lo, dim.hi))
    else:
        n = len(dim.values)
        if n > 1:
            i = dim.index_of(v)
            if categorical_move == "redraw":
                j = int(rng.integers(n - 1))
                j = j + 1 if j >= i else j
            elif i == 0:
                j = 1
            elif i == n - 1:
                j = n - 2
            else:
                j = i + (1 if rng.random() < 0.5 else -1)
            v = dim.values[j]
    genome[pos] = v
    return space.decode(space.repair(genome, rng))


def run_sa(space: SearchSpace, objective: Objective, max_steps: int = 100, t0: float | None = None,
           cooling: float = 0.95, seed: int = 0, init: Candidate | None = None,
           categorical_move: str = "adjacent") -> OptimizeResult:
    """Anneal with a geometric schedule ``T_{k+1} = cooling * T_k``.

    With ``t0=None`` the start temperature is calibrated from probe moves so
    the median probe loss is accepted with probability 0.8.  ``t0=0`` gives
    a greedy hill-climb.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if not 0 < cooling < 1:
        raise ValueError("cooling must lie in (0, 1)")
    rng = derive_rng(seed, "sa", "moves")
    ev = Evaluator(objective, seed, "sa")
    current = init if init is not None else space.sample(rng)
    space.validate(current)
    f_cur = ev.evaluate_one(current, 0, "init").fitness

    if t0 is None:
        deltas = []
        for k in range(N_PROBES):
            probe = neighbor(space, current, rng, categorical_move)
            f = ev.evaluate_one(probe, 0, "probe").fitness
            if math.isfinite(f) and math.isfinite(f_cur):
                deltas.append(abs(f - f_cur))
        med = float(np.median(deltas)) if deltas else 0.0
        t0 = med / -math.log(ACCEPT_AT_MEDIAN) if med > 0 else 1.0
    state = AnnealState(current, f_cur, float(t0), 0)
    temps = [state.temperature]
    accepted = 0
    for step in range(1, max_steps + 1):
        cand = neighbor(space, state.current, rng, categorical_move)
        f_new = ev.evaluate_one(cand, step, "move").fitness
        delta = f_new - state.current_fitness if math.isfinite(f_new) else -math.inf
        if math.isinf(state.current_fitness) and state.current_fitness < 0:
            delta = math.inf if math.isfinite(f_new) else -math.inf
        u = rng.random()
        if u < acceptance_probability(delta, state.temperature):
            state = AnnealState(cand, f_new, state.temperature, step)
            accepted += 1
        state = AnnealState(state.current, state.current_fitness, state.temperature * cooling, step)
        temps.append(state.temperature)
    return OptimizeResult(
        "sa", best_of(ev.history), ev.history,
        {"t0": float(t0), "temperatures": temps, "accepted": accepted,
         "final": state.current, "final_fitness": state.current_fitness},
    )
