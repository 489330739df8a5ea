"""Genetic algorithm and its adaptive-operator variant.

Individuals are genomes from :meth:`SearchSpace.encode`.  Genes holding the
inactive sentinel never take part in crossover or mutation; after any
operator the genome is repaired so activity stays consistent with the
guard genes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..rng import derive_rng
from ..searchspace import INACTIVE, SearchSpace
from .base import Evaluator, Objective, OptimizeResult, best_of

CROSSOVER_OPS = ("uniform", "one_point")
MUTATION_OPS = ("random_reset", "multi_point")


# operators -------------------------------------------------------------

def tournament(fitness: Sequence[float], k: int, rng: np.random.Generator) -> int:
    """Index of the fittest of ``k`` contestants drawn with replacement."""
    picks = rng.integers(len(fitness), size=k)
    return int(max(picks, key=lambda i: (fitness[i], -i)))


def uniform_crossover(space: SearchSpace, a: tuple, b: tuple, p_swap: float,
                      rng: np.random.Generator) -> tuple[tuple, tuple]:
    ca, cb = list(a), list(b)
    for i in range(len(a)):
        if a[i] is INACTIVE or b[i] is INACTIVE:
            continue
        if rng.random() < p_swap:
            ca[i], cb[i] = cb[i], ca[i]
    return space.repair(ca, rng), space.repair(cb, rng)


def one_point_crossover(space: SearchSpace, a: tuple, b: tuple,
                        rng: np.random.Generator) -> tuple[tuple, tuple]:
    n = len(a)
    if n < 2:
        return tuple(a), tuple(b)
    cut = int(rng.integers(1, n))
    ca = list(a[:cut]) + list(b[cut:])
    cb = list(b[:cut]) + list(a[cut:])
    return space.repair(ca, rng), space.repair(cb, rng)


def random_reset(space: SearchSpace, g: tuple, rng: np.random.Generator) -> tuple:
    """Re-sample exactly one active gene."""
    active = space.active_positions(g)
    pos = active[int(rng.integers(len(active)))]
    return space.resample_gene(g, pos, rng)


def multi_point(space: SearchSpace, g: tuple, rng: np.random.Generator, p_gene: float = 0.3) -> tuple:
    """Re-sample each active gene independently with probability ``p_gene``."""
    out = list(g)
    for pos in space.active_positions(g):
        if rng.random() < p_gene:
            out[pos] = space.dims[pos].sample(rng)
    return space.repair(out, rng)


def _mutate_ga(space, g, rng):
    # at least one gene changes; each further active gene with prob 1/n_active
    active = space.active_positions(g)
    out = list(g)
    chosen = [p for p in active if rng.random() < 1.0 / len(active)]
    if not chosen:
        chosen = [active[int(rng.integers(len(active)))]]
    for pos in chosen:
        out[pos] = space.dims[pos].sample(rng)
    return space.repair(out, rng)


# plain GA --------------------------------------------------------------

def run_ga(space: SearchSpace, objective: Objective, pop_size: int = 20, generations: int = 10,
           k_tournament: int = 3, p_cx: float = 0.6, p_mut: float = 0.3, seed: int = 0,
           jobs: int = 1, elitism: int = 0) -> OptimizeResult:
    """Generational GA with tournament selection and per-gene uniform crossover.

    Each gene of a parent pair is exchanged with probability ``p_cx``; each
    child is mutated with probability ``p_mut``.
    """
    if pop_size < 2:
        raise ValueError("pop_size must be >= 2")
    rng = derive_rng(seed, "ga", "operators")
    ev = Evaluator(objective, seed, "ga", jobs=jobs)
    pop = [space.encode(space.sample(rng)) for _ in range(pop_size)]
    fit = [r.fitness for r in ev.evaluate([space.decode(g) for g in pop], 0, ["init"] * pop_size)]
    gen_best = [max(fit)]
    for gen in range(1, generations + 1):
        order = sorted(range(pop_size), key=lambda i: (-fit[i], i))
        elites = [pop[i] for i in order[:elitism]]
        children: list[tuple] = []
        while len(children) < pop_size - elitism:
            a = pop[tournament(fit, k_tournament, rng)]
            b = pop[tournament(fit, k_tournament, rng)]
            ca, cb = uniform_crossover(space, a, b, p_cx, rng)
            for c in (ca, cb):
                if rng.random() < p_mut:
                    c = _mutate_ga(space, c, rng)
                children.append(c)
        children = children[: pop_size - elitism]
        pop = elites + children
        reports = ev.evaluate([space.decode(g) for g in pop], gen,
                              ["elite"] * len(elites) + ["offspring"] * len(children))
        fit = [r.fitness for r in reports]
        gen_best.append(max(fit))
    return OptimizeResult("ga", best_of(ev.history), ev.history, {"generation_best": gen_best})


# adaptive GA -----------------------------------------------------------

@dataclass(frozen=True)
class OperatorWeights:
    """Selection probabilities of one operator toolbox plus this generation's success counts."""

    weights: dict
    alpha: float = 0.1
    successes: dict = field(default_factory=dict)

    @classmethod
    def uniform(cls, ops: Sequence[str], alpha: float = 0.1) -> "OperatorWeights":
        return cls({o: 1.0 / len(ops) for o in ops}, alpha, {o: 0 for o in ops})

    def draw(self, rng: np.random.Generator) -> str:
        ops = list(self.weights)
        p = np.array([self.weights[o] for o in ops])
        return ops[int(rng.choice(len(ops), p=p / p.sum()))]

    def credit(self, op: str, n: int = 1) -> "OperatorWeights":
        s = dict(self.successes)
        s[op] = s.get(op, 0) + n
        return replace(self, successes=s)


def weight_rule(w: float, successes: int, n: int, alpha: float) -> float:
    """Unnormalised update: w(1 - alpha) + (S / N) alpha."""
    return w + alpha * (successes / n - w)


def update_operator_weights(ow: OperatorWeights, n: int) -> OperatorWeights:
    """Apply the success-rate rule to every operator, renormalise, reset counts."""
    if n <= 0:
        raise ValueError("N must be positive")
    raw = {o: weight_rule(w, ow.successes.get(o, 0), n, ow.alpha) for o, w in ow.weights.items()}
    total = math.fsum(raw.values())
    if total <= 0.0:
        new = {o: 1.0 / len(raw) for o in raw}
    else:
        new = {o: v / total for o, v in raw.items()}
    return OperatorWeights(new, ow.alpha, {o: 0 for o in raw})


def _apply_crossover(op, space, a, b, p_swap, rng):
    if op == "uniform":
        return uniform_crossover(space, a, b, p_swap, rng)[0]
    if op == "one_point":
        return one_point_crossover(space, a, b, rng)[0]
    raise ValueError(f"unknown crossover operator {op!r}")


def _apply_mutation(op, space, g, rng, p_gene):
    if op == "random_reset":
        return random_reset(space, g, rng)
    if op == "multi_point":
        return multi_point(space, g, rng, p_gene)
    raise ValueError(f"unknown mutation operator {op!r}")


def run_adaptive_ga(space: SearchSpace, objective: Objective, pop_size: int = 20, generations: int = 15,
                    k_tournament: int = 3, p_mut: float = 0.2, alpha: float = 0.1, elitism: int = 2,
                    seed: int = 0, jobs: int = 1, p_swap: float = 0.5,
                    multi_point_rate: float = 0.3) -> OptimizeResult:
    """GA whose crossover and mutation operators are chosen by learned weights.

    An offspring counts as a success for the operators that produced it when
    its fitness beats the mean fitness of the parent population.  Weights of
    each toolbox are updated once per generation and renormalised.  The top
    ``elitism`` individuals pass to the next generation unchanged.
    """
    if pop_size <= elitism:
        raise ValueError("pop_size must exceed elitism")
    rng = derive_rng(seed, "aga", "operators")
    ev = Evaluator(objective, seed, "aga", jobs=jobs)
    pop = [space.encode(space.sample(rng)) for _ in range(pop_size)]
    fit = [r.fitness for r in ev.evaluate([space.decode(g) for g in pop], 0, ["init"] * pop_size)]
    cx_w = OperatorWeights.uniform(CROSSOVER_OPS, alpha)
    mut_w = OperatorWeights.uniform(MUTATION_OPS, alpha)
    trajectory = [{**cx_w.weights, **mut_w.weights}]
    gen_best = [max(fit)]
    best_so_far = [max(fit)]
    for gen in range(1, generations + 1):
        finite = [f for f in fit if math.isfinite(f)]
        parent_mean = float(np.mean(finite)) if finite else -math.inf
        order = sorted(range(pop_size), key=lambda i: (-fit[i], i))
        elites = [pop[i] for i in order[:elitism]]
        elite_fit = [fit[i] for i in order[:elitism]]
        children, tags = [], []
        for _ in range(pop_size - elitism):
            a = pop[tournament(fit, k_tournament, rng)]
            b = pop[tournament(fit, k_tournament, rng)]
            cx = cx_w.draw(rng)
            child = _apply_crossover(cx, space, a, b, p_swap, rng)
            mut = None
            if rng.random() < p_mut:
                mut = mut_w.draw(rng)
                child = _apply_mutation(mut, space, child, rng, multi_point_rate)
            children.append(child)
            tags.append((cx, mut))
        labels = [cx if mut is None else f"{cx}+{mut}" for cx, mut in tags]
        reports = ev.evaluate([space.decode(g) for g in children], gen, labels)
        child_fit = [r.fitness for r in reports]
        for (cx, mut), f in zip(tags, child_fit):
            if f > parent_mean:
                cx_w = cx_w.credit(cx)
                if mut is not None:
                    mut_w = mut_w.credit(mut)
        cx_w = update_operator_weights(cx_w, pop_size)
        mut_w = update_operator_weights(mut_w, pop_size)
        trajectory.append({**cx_w.weights, **mut_w.weights})
        pop = elites + children
        fit = elite_fit + child_fit
        gen_best.append(max(fit))
        best_so_far.append(max(best_so_far[-1], gen_best[-1]))
    return OptimizeResult(
        "aga", best_of(ev.history), ev.history,
        {"weight_trajectory": trajectory, "generation_best": gen_best, "best_so_far": best_so_far},
    )
