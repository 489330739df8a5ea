import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabhpo.errors import ConfigError, DomainError
from tabhpo.searchspace import INACTIVE, Candidate, ParamDim, SearchSpace, ValidityRule, candidate_key
from tabhpo.spaces import MLP_TOPOLOGIES, gbm_space, mlp_genome, svm_grid


def brute_force_grid(space):
    """Full cross product (inactive dims pinned to the sentinel), filtered by validity."""
    options = []
    for d in space.dims:
        options.append(list(d.grid_values) + [INACTIVE])
    seen = []
    for combo in itertools.product(*options):
        cand = Candidate(zip(space.names, combo))
        if space.is_valid(cand) and cand not in seen:
            seen.append(cand)
    return seen


def test_svm_grid_matches_brute_force():
    space = svm_grid()
    grid = space.enumerate_grid()
    oracle = brute_force_grid(space)
    assert len(grid) == len(oracle) == 366
    assert set(grid) == set(oracle)


def test_grid_order_is_lexicographic():
    space = svm_grid()
    grid = space.enumerate_grid()
    kernels = [c["kernel"] for c in grid]
    assert kernels[:6] == ["linear"] * 6
    assert [c["C"] for c in grid[:6]] == [0.01, 0.1, 1.0, 5.0, 10.0, 20.0]
    assert grid == svm_grid().enumerate_grid()


def test_trivial_grids():
    one = SearchSpace([ParamDim.uniform("a", 0, 1, grid=(0.1,))])
    assert one.enumerate_grid() == [Candidate({"a": 0.1})]
    two = SearchSpace([ParamDim.categorical("a", range(4)), ParamDim.integer("b", 0, 10, grid=range(5))])
    assert two.grid_size() == 20


def test_missing_grid_names_the_dimension():
    space = SearchSpace([ParamDim.categorical("a", (1, 2)), ParamDim.uniform("rate", 0, 1)])
    with pytest.raises(ConfigError, match="rate"):
        space.enumerate_grid()


@st.composite
def random_spaces(draw):
    n_guard_values = draw(st.integers(1, 3))
    guard = ParamDim.categorical("g", [f"v{i}" for i in range(n_guard_values)])
    n_dep = draw(st.integers(0, 3))
    deps = [ParamDim.categorical(f"d{i}", list(range(draw(st.integers(1, 3))))) for i in range(n_dep)]
    rules = []
    for v in guard.values:
        active = draw(st.sets(st.sampled_from([d.name for d in deps]))) if deps else set()
        if active and draw(st.booleans()):
            rules.append(ValidityRule("g", v, frozenset(active)))
    return SearchSpace([guard, *deps], rules)


@settings(max_examples=60, deadline=None)
@given(random_spaces())
def test_grid_count_matches_closed_form(space):
    # closed form: sum over guard values of the product of active dim sizes
    controlled = {n for r in space.rules for n in r.active}
    total = 0
    for v in space["g"].values:
        size = 1
        for d in space.dims[1:]:
            active = d.name not in controlled or any(r.equals == v and d.name in r.active for r in space.rules)
            size *= len(d.values) if active else 1
        total += size
    assert space.grid_size() == total == len(brute_force_grid(space))


def test_sampling_respects_bounds():
    space = gbm_space()
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        c = space.sample(rng)
        space.validate(c)
    lr = [space.sample(rng)["learning_rate"] for _ in range(2000)]
    assert min(lr) >= 1e-5 and max(lr) <= 5e-1
    # log-uniform: a quarter of the mass lies in each quarter of the log range
    q = np.mean(np.log10(lr) < math.log10(1e-5) + 0.25 * (math.log10(5e-1) - math.log10(1e-5)))
    assert abs(q - 0.25) < 0.04


def test_single_choice_and_integer_uniformity():
    rng = np.random.default_rng(1)
    assert ParamDim.categorical("act", ("relu",)).sample(rng) == "relu"
    dim = ParamDim.integer("depth", 2, 10)
    draws = np.array([dim.sample(rng) for _ in range(200_000)])
    freq = np.bincount(draws, minlength=11)[2:] / len(draws)
    assert len(freq) == 9
    assert np.all(np.abs(freq - 1 / 9) < 0.01)


def test_mlp_genome_round_trip():
    space = mlp_genome()
    cand = space.make(hidden_layers=(1024, 256, 128), dropout=0.6132, learning_rate=1e-5,
                      activation="relu", batch_size=407)
    genome = space.encode(cand)
    assert len(genome) == 5
    assert genome[0] == (1024, 256, 128)
    assert space.decode(genome) == cand
    # lists from JSON are frozen into tuples on decode
    assert space.decode([[1024, 256, 128], 0.6132, 1e-5, "relu", 407]) == cand


def test_decode_rejects_out_of_domain_gene():
    space = mlp_genome()
    with pytest.raises(DomainError, match="dropout"):
        space.decode([MLP_TOPOLOGIES[0], 0.9, 1e-3, "relu", 64])
    with pytest.raises(DomainError, match="length"):
        space.decode([MLP_TOPOLOGIES[0]])


def test_mutated_genomes_stay_valid():
    rng = np.random.default_rng(3)
    for space in (svm_grid(), mlp_genome(), gbm_space()):
        for _ in range(1000):
            g = space.encode(space.sample(rng))
            pos = int(rng.integers(len(g)))
            space.decode(space.resample_gene(g, pos, rng))


def test_inactive_dims_hold_sentinel():
    space = svm_grid()
    lin = space.make(kernel="linear", C=1.0)
    assert lin["gamma"] is INACTIVE and lin["degree"] is INACTIVE
    with pytest.raises(DomainError, match="inactive"):
        space.validate({**dict(lin), "gamma": 0.1})
    with pytest.raises(DomainError):
        space.make(kernel="rbf", C=1.0)  # gamma missing
    assert lin.active_items() == {"kernel": "linear", "C": 1.0}
    assert not INACTIVE


def test_space_invariants():
    with pytest.raises(ConfigError):
        ParamDim.uniform("x", 1, 1)
    with pytest.raises(ConfigError):
        ParamDim.loguniform("x", 0, 1)
    with pytest.raises(ConfigError):
        ParamDim.categorical("x", ())
    with pytest.raises(ConfigError):
        ParamDim.categorical("x", (1, 1))
    with pytest.raises(ConfigError):
        SearchSpace([ParamDim.categorical("a", (1,)), ParamDim.categorical("a", (2,))])
    with pytest.raises(ConfigError, match="unknown"):
        SearchSpace([ParamDim.categorical("a", (1,))], [ValidityRule("a", 1, frozenset({"nope"}))])


def test_config_round_trip():
    space = svm_grid()
    again = SearchSpace.from_config(space.to_config())
    assert again.enumerate_grid() == space.enumerate_grid()
    mlp = SearchSpace.from_config(mlp_genome().to_config())
    assert mlp["hidden_layers"].values == MLP_TOPOLOGIES


def test_candidate_hashing_and_key():
    a = Candidate({"x": 1, "y": (1, 2)})
    b = Candidate({"x": 1, "y": [1, 2]})
    assert a == b and hash(a) == hash(b)
    assert candidate_key(a) == candidate_key(b)
