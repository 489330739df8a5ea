import math
from itertools import product

import numpy as np
import pytest

from tabhpo.errors import InvariantError
from tabhpo.optimizers import (
    FitnessReport,
    OperatorWeights,
    TpeState,
    acceptance_probability,
    neighbor,
    run_adaptive_ga,
    run_ga,
    run_grid,
    run_sa,
    run_tpe,
    tpe_acquisition,
    update_operator_weights,
)
from tabhpo.searchspace import INACTIVE, ParamDim, SearchSpace
from tabhpo.spaces import gbm_space, mlp_genome, svm_grid


def _weights(w, s, alpha=0.1):
    ops = [f"op{i}" for i in range(len(w))]
    return OperatorWeights(dict(zip(ops, w)), alpha, dict(zip(ops, s)))


# operator weights -------------------------------------------------------

def test_weight_update_normalises():
    new = update_operator_weights(_weights([0.5, 0.5], [5, 0]), 20)
    assert new.weights["op0"] == pytest.approx(0.475 / 0.925, abs=1e-12)
    assert new.weights["op1"] == pytest.approx(0.45 / 0.925, abs=1e-12)
    assert str(new.weights["op0"]).startswith("0.5135")
    assert str(new.weights["op1"]).startswith("0.4864")
    assert all(v == 0 for v in new.successes.values())


@pytest.mark.parametrize("w", [[0.5, 0.5], [0.7, 0.3], [0.1, 0.2, 0.7]])
def test_weight_fixed_points(w):
    new = update_operator_weights(_weights(w, [0] * len(w)), 20)
    assert list(new.weights.values()) == pytest.approx(w, abs=1e-12)
    k = len(w)
    for s in (3, 20):
        even = update_operator_weights(_weights([1 / k] * k, [s] * k), 20)
        assert list(even.weights.values()) == pytest.approx([1 / k] * k, abs=1e-12)
        # with unequal weights, equal successes pull towards uniform
        moved = update_operator_weights(_weights(w, [s] * k), 20)
        spread = np.ptp(list(moved.weights.values()))
        assert spread <= np.ptp(w) + 1e-12
    frozen = update_operator_weights(_weights(w, [7] + [0] * (len(w) - 1), alpha=0.0), 20)
    assert list(frozen.weights.values()) == pytest.approx(w, abs=1e-15)


def test_weights_stay_on_simplex():
    rng = np.random.default_rng(0)
    for _ in range(500):
        k = int(rng.integers(2, 5))
        w = rng.dirichlet(np.ones(k))
        n = int(rng.integers(1, 40))
        new = update_operator_weights(_weights(list(w), list(rng.integers(0, n + 1, k)),
                                               alpha=float(rng.random())), n)
        vals = np.array(list(new.weights.values()))
        assert np.all(vals >= 0)
        assert abs(math.fsum(vals) - 1.0) < 1e-12


def test_update_guards():
    with pytest.raises(ValueError):
        update_operator_weights(_weights([0.5, 0.5], [0, 0]), 0)
    reset = update_operator_weights(_weights([0.0, 0.0], [0, 0], alpha=0.5), 4)
    assert list(reset.weights.values()) == [0.5, 0.5]


# objectives ---------------------------------------------------------------

def _quadratic_space():
    return SearchSpace([ParamDim.categorical("a", (-1.0, 0.0, 1.0)), ParamDim.categorical("b", (0.0, 1.0, 2.0))])


def _quadratic(c, rng):
    return -(c["a"] - 0.4) ** 2 - (c["b"] - 1.7) ** 2


def test_grid_matches_exhaustive_oracle():
    space = _quadratic_space()
    res = run_grid(space, _quadratic)
    assert len(res.history) == 9
    oracle = max(product(space["a"].values, space["b"].values), key=lambda ab: -(ab[0] - 0.4) ** 2 - (ab[1] - 1.7) ** 2)
    assert (res.best.candidate["a"], res.best.candidate["b"]) == oracle
    assert [t.trial_index for t in res.history] == list(range(9))


def test_grid_single_candidate_and_ties():
    one = SearchSpace([ParamDim.categorical("a", ("only",))])
    res = run_grid(one, lambda c, r: 0.3)
    assert res.best.candidate["a"] == "only"
    flat = run_grid(_quadratic_space(), lambda c, r: 1.0)
    assert flat.best.trial_index == 0


def test_grid_records_failures_and_continues():
    def obj(c, rng):
        if c["a"] == 0.0:
            raise RuntimeError("boom")
        return _quadratic(c, rng)

    res = run_grid(_quadratic_space(), obj)
    failed = [t for t in res.history if t.report.error]
    assert len(failed) == 3 and all(t.fitness == -math.inf for t in failed)
    assert "boom" in failed[0].report.error
    assert res.best.candidate["a"] == 1.0


def test_grid_fit_accounting():
    res = run_grid(svm_grid(), lambda c, r: FitnessReport(0.5, (0.5,) * 3, 3), cv_folds=3)
    assert len(res.history) == 366 and res.n_model_fits == 1098
    with pytest.raises(InvariantError):
        run_grid(svm_grid(), lambda c, r: FitnessReport(0.5, (), 2), cv_folds=3)


def _binary_space(m):
    return SearchSpace([ParamDim.categorical(f"g{i}", (0, 1)) for i in range(m)])


def _onemax(c, rng):
    return float(sum(c.values()))


def test_ga_defaults():
    import inspect

    sig = inspect.signature(run_ga)
    assert sig.parameters["k_tournament"].default == 3
    assert sig.parameters["p_cx"].default == 0.6
    assert sig.parameters["p_mut"].default == 0.3


def test_ga_solves_onemax():
    hits = 0
    for seed in range(20):
        res = run_ga(_binary_space(8), _onemax, pop_size=20, generations=30, seed=seed)
        hits += res.best.fitness == 8.0
    assert hits >= 18


def test_ga_zero_generations_is_initial_population():
    res = run_ga(_binary_space(8), _onemax, pop_size=10, generations=0, seed=4)
    assert len(res.history) <= 10
    assert res.best.fitness == max(t.fitness for t in res.history)
    assert all(t.generation == 0 for t in res.history)


def test_ga_history_bounded_by_budget():
    res = run_ga(_binary_space(8), _onemax, pop_size=8, generations=5, seed=1)
    assert len(res.history) <= 8 * 6
    assert len({t.candidate for t in res.history}) == len(res.history)


def _adjacent_blocks(m):
    # rewards equal neighbours: contiguous segments survive one-point crossover intact
    def f(c, rng):
        g = [c[f"g{i}"] for i in range(m)]
        return float(sum(g[i] == g[i + 1] for i in range(m - 1)))
    return f


def test_aga_learns_block_preserving_crossover():
    space = SearchSpace([ParamDim.categorical(f"g{i}", tuple(range(4))) for i in range(16)])
    obj = _adjacent_blocks(16)
    wins = 0
    for seed in range(20):
        final = run_adaptive_ga(space, obj, seed=seed).extras["weight_trajectory"][-1]
        wins += final["one_point"] > 0.5
        control = run_adaptive_ga(space, obj, seed=seed, alpha=0.0, generations=3)
        assert control.extras["weight_trajectory"][-1]["one_point"] == pytest.approx(0.5, abs=1e-15)
    assert wins >= 15


def test_aga_elites_and_trajectory():
    res = run_adaptive_ga(_binary_space(10), _onemax, pop_size=8, generations=6, seed=2)
    best = res.extras["best_so_far"]
    assert len(best) == 7 and all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    # elitism keeps the generation best from ever dropping
    gb = res.extras["generation_best"]
    assert all(b2 >= b1 for b1, b2 in zip(gb, gb[1:]))
    for w in res.extras["weight_trajectory"]:
        assert w["uniform"] + w["one_point"] == pytest.approx(1.0, abs=1e-12)
        assert w["random_reset"] + w["multi_point"] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        run_adaptive_ga(_binary_space(3), _onemax, pop_size=2, elitism=2)


# annealing ------------------------------------------------------------------

def test_acceptance_probability():
    assert acceptance_probability(0.0, 1.0) == 1.0
    assert acceptance_probability(0.3, 0.01) == 1.0
    assert acceptance_probability(-2.0, 2.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert acceptance_probability(-1e-9, 0.0) == 0.0
    rng = np.random.default_rng(0)
    p = acceptance_probability(-0.5, 0.5)
    empirical = np.mean(rng.random(100_000) < p)
    assert abs(empirical - 0.3679) < 0.02


def test_neighbor_moves_are_bounded():
    rng = np.random.default_rng(5)
    space = gbm_space()
    for _ in range(2000):
        cur = space.sample(rng)
        nxt = neighbor(space, cur, rng)
        space.validate(nxt)
        changed = [n for n in space.names if nxt[n] != cur[n]]
        assert len(changed) <= 1
        for n in changed:
            d = space[n]
            if d.kind == "uniform":
                assert abs(nxt[n] - cur[n]) <= 0.1 * (d.hi - d.lo) + 1e-12
            elif d.kind == "loguniform":
                assert abs(math.log10(nxt[n]) - math.log10(cur[n])) <= 1 + 1e-12


def test_neighbor_redraw_option_changes_value():
    rng = np.random.default_rng(0)
    space = SearchSpace([ParamDim.categorical("x", (0, 1, 2, 3))])
    cur = space.make(x=1)
    for _ in range(200):
        assert neighbor(space, cur, rng, categorical_move="redraw")["x"] != 1


def test_sa_temperature_and_bookkeeping():
    space = _quadratic_space()
    res = run_sa(space, _quadratic, max_steps=30, t0=1.0, cooling=0.9, seed=3)
    temps = res.extras["temperatures"]
    assert all(b < a for a, b in zip(temps, temps[1:]))
    assert res.best.fitness == max(t.fitness for t in res.history)
    with pytest.raises(ValueError):
        run_sa(space, _quadratic, max_steps=0)
    with pytest.raises(ValueError):
        run_sa(space, _quadratic, cooling=1.0)


# TPE ------------------------------------------------------------------------

def test_tpe_on_optuna_space_completes():
    def obj(c, rng):
        return -abs(math.log10(c["learning_rate"]) + 1) - 0.001 * c["max_depth"]

    res = run_tpe(gbm_space(), obj, n_trials=15, seed=0)
    assert len(res.history) == 15
    assert [t.operator_used for t in res.history[:5]] == ["startup"] * 5
    assert all(t.operator_used == "tpe" for t in res.history[5:])
    for t in res.history:
        gbm_space().validate(t.candidate)


def test_tpe_all_startup_is_random_search():
    res = run_tpe(gbm_space(), lambda c, r: 0.0, n_trials=6, n_startup=6, seed=1)
    assert all(t.operator_used == "startup" for t in res.history)
    with pytest.raises(ValueError):
        run_tpe(gbm_space(), lambda c, r: 0.0, n_trials=4, n_startup=5)


def _lr_space():
    return SearchSpace([ParamDim.loguniform("lr", 1e-5, 1e-1)])


def _state(values, fitness):
    from tabhpo.optimizers.base import TrialRecord
    from tabhpo.searchspace import Candidate

    space = _lr_space()
    hist = [TrialRecord(Candidate({"lr": v}), FitnessReport(f), i) for i, (v, f) in enumerate(zip(values, fitness))]
    return TpeState(space, hist)


def test_tpe_split_and_acquisition():
    vals = [1e-5, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1, 2e-3, 5e-5]
    fit = [-(math.log10(v) + 2) ** 2 for v in vals]
    st = _state(vals, fit)
    assert st.good and st.bad
    assert all(t.fitness >= st.threshold for t in st.good)
    assert all(t.fitness <= st.threshold for t in st.bad)
    from tabhpo.searchspace import Candidate

    near_good = tpe_acquisition(st, Candidate({"lr": 1e-2}))
    far = tpe_acquisition(st, Candidate({"lr": 1e-5}))
    assert near_good > far > 0


def test_tpe_degenerate_density_falls_back_to_uniform():
    st = _state([1e-3, 1e-3, 1e-3, 1e-3], [1.0, 0.0, 0.0, 0.0])
    from tabhpo.optimizers.tpe import UniformDensity

    assert isinstance(st.l["lr"], UniformDensity)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = st.sample_good(rng)["lr"]
        assert 1e-5 <= x <= 1e-1


def test_tpe_skips_inactive_dims():
    space = svm_grid()
    res = run_tpe(space, lambda c, r: float(c["C"]) if c["gamma"] is INACTIVE else 0.0, n_trials=12, seed=2)
    for t in res.history:
        space.validate(t.candidate)


# determinism ----------------------------------------------------------------

def _noisy(c, rng):
    return _onemax(c, rng) + 0.01 * rng.standard_normal()


def test_parallel_evaluation_is_deterministic():
    space = _binary_space(8)
    a = run_ga(space, _noisy, pop_size=10, generations=4, seed=9, jobs=1)
    b = run_ga(space, _noisy, pop_size=10, generations=4, seed=9, jobs=4)
    assert [t.fitness for t in a.history] == [t.fitness for t in b.history]
    assert a.history_csv(space, include_timing=False) == b.history_csv(space, include_timing=False)
    c = run_adaptive_ga(space, _noisy, pop_size=10, generations=4, seed=9, jobs=4)
    d = run_adaptive_ga(space, _noisy, pop_size=10, generations=4, seed=9, jobs=1)
    assert c.history_csv(space, False) == d.history_csv(space, False)
    g1 = run_grid(space, _noisy, jobs=1)
    g4 = run_grid(space, _noisy, jobs=4)
    assert [t.fitness for t in g1.history] == [t.fitness for t in g4.history]


def test_history_csv_layout():
    space = mlp_genome()
    res = run_tpe(space, lambda c, r: c["dropout"], n_trials=5, n_startup=5, seed=0)
    lines = res.history_csv(space).splitlines()
    assert lines[0].split(",")[:3] == ["trial_index", "generation", "operator_used"]
    assert lines[0].endswith("wall_ms")
    assert len(lines) == 6
