"""Hyperparameter search spaces declared as data.

A :class:`SearchSpace` is an ordered list of :class:`ParamDim` plus optional
one-level :class:`ValidityRule` guards ("when kernel == rbf, gamma is
active").  Dimensions that are inactive for a given assignment hold the
:data:`INACTIVE` sentinel, so genomes always have one gene per dimension.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError

KINDS = ("uniform", "loguniform", "int", "categorical")


class _Inactive:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INACTIVE"

    def __reduce__(self):
        return (_Inactive, ())

    def __bool__(self):
        return False


INACTIVE = _Inactive()


def _freeze(value):
    # JSON gives lists for layer shapes; categories must be hashable
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _is_number(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, (bool, np.bool_))


@dataclass(frozen=True)
class ParamDim:
    """One hyperparameter dimension.

    ``grid`` lists the values used by exhaustive enumeration; categorical
    dimensions default to their full value list.
    """

    name: str
    kind: str
    lo: float | None = None
    hi: float | None = None
    values: tuple = ()
    grid: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "values", tuple(_freeze(v) for v in self.values))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(_freeze(v) for v in self.grid))
        if self.kind == "categorical":
            if not self.values:
                raise ConfigError(f"dimension {self.name!r}: categorical needs at least one value")
            if len(set(self.values)) != len(self.values):
                raise ConfigError(f"dimension {self.name!r}: categorical values must be unique")
        else:
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ConfigError(f"dimension {self.name!r}: need lo < hi, got [{self.lo}, {self.hi}]")
            if self.kind == "loguniform" and self.lo <= 0:
                raise ConfigError(f"dimension {self.name!r}: log-uniform requires lo > 0")
            if self.kind == "int":
                if int(self.lo) != self.lo or int(self.hi) != self.hi:
                    raise ConfigError(f"dimension {self.name!r}: integer bounds must be integral")
                object.__setattr__(self, "lo", int(self.lo))
                object.__setattr__(self, "hi", int(self.hi))
            else:
                object.__setattr__(self, "lo", float(self.lo))
                object.__setattr__(self, "hi", float(self.hi))
        if self.grid is not None:
            if len(set(self.grid)) != len(self.grid):
                raise ConfigError(f"dimension {self.name!r}: grid values must be unique")
            for v in self.grid:
                if not self.contains(v):
                    raise ConfigError(f"dimension {self.name!r}: grid value {v!r} outside domain")

    # constructors -----------------------------------------------------
    @classmethod
    def uniform(cls, name, lo, hi, grid=None):
        return cls(name, "uniform", lo, hi, grid=None if grid is None else tuple(grid))

    @classmethod
    def loguniform(cls, name, lo, hi, grid=None):
        return cls(name, "loguniform", lo, hi, grid=None if grid is None else tuple(grid))

    @classmethod
    def integer(cls, name, lo, hi, grid=None):
        return cls(name, "int", lo, hi, grid=None if grid is None else tuple(grid))

    @classmethod
    def categorical(cls, name, values, grid=None):
        return cls(name, "categorical", values=tuple(values), grid=None if grid is None else tuple(grid))

    # -------------------------------------------------------------------
    @property
    def is_numeric(self) -> bool:
        return self.kind != "categorical"

    @property
    def grid_values(self) -> tuple | None:
        if self.grid is not None:
            return self.grid
        if self.kind == "categorical":
            return self.values
        return None

    def contains(self, v) -> bool:
        if self.kind == "categorical":
            return any(v == x and type(v) is type(x) for x in self.values) or (
                _is_number(v) and any(_is_number(x) and v == x for x in self.values)
            )
        if not _is_number(v) or not math.isfinite(v):
            return False
        if self.kind == "int" and int(v) != v:
            return False
        return self.lo <= v <= self.hi

    def index_of(self, v) -> int:
        """Position of a categorical value in the declared order."""
        for i, x in enumerate(self.values):
            if v == x:
                return i
        raise DomainError(f"dimension {self.name!r}: {v!r} is not a declared value")

    def sample(self, rng: np.random.Generator):
        if self.kind == "categorical":
            return self.values[int(rng.integers(len(self.values)))]
        if self.kind == "int":
            return int(rng.integers(self.lo, self.hi, endpoint=True))
        if self.kind == "loguniform":
            return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))

    def to_config(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            out["values"] = [list(v) if isinstance(v, tuple) else v for v in self.values]
        else:
            out["low"], out["high"] = self.lo, self.hi
        if self.grid is not None:
            out["grid"] = [list(v) if isinstance(v, tuple) else v for v in self.grid]
        return out

    @classmethod
    def from_config(cls, cfg: Mapping) -> "ParamDim":
        allowed = {"name", "kind", "low", "high", "values", "grid"}
        extra = set(cfg) - allowed
        name = cfg.get("name")
        if extra:
            raise ConfigError(f"dimension {name!r}: unknown keys {sorted(extra)}")
        if name is None or "kind" not in cfg:
            raise ConfigError("dimension entries need 'name' and 'kind'")
        return cls(
            name=name,
            kind=cfg["kind"],
            lo=cfg.get("low"),
            hi=cfg.get("high"),
            values=tuple(cfg.get("values", ())),
            grid=None if cfg.get("grid") is None else tuple(cfg["grid"]),
        )


@dataclass(frozen=True)
class ValidityRule:
    """When categorical ``dim`` equals ``equals``, the ``active`` dims are active."""

    dim: str
    equals: Any
    active: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "equals", _freeze(self.equals))
        object.__setattr__(self, "active", frozenset(self.active))

    def holds(self, assignment: Mapping) -> bool:
        return assignment.get(self.dim, INACTIVE) == self.equals

    @classmethod
    def from_config(cls, cfg: Mapping) -> "ValidityRule":
        try:
            when = cfg["when"]
            return cls(when["dim"], when["equals"], frozenset(cfg["active"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed validity rule {cfg!r}: expected when.dim, when.equals, active") from exc


class Candidate(Mapping):
    """Immutable, hashable assignment of values to dimension names."""

    __slots__ = ("_items", "_dict", "_hash")

    def __init__(self, assignment: Mapping | Iterable[tuple[str, Any]]):
        items = assignment.items() if isinstance(assignment, Mapping) else assignment
        items = tuple((k, _freeze(v)) for k, v in items)
        self._items = items
        self._dict = dict(items)
        self._hash = None

    def __getitem__(self, key):
        return self._dict[key]

    def __iter__(self):
        return iter(self._dict)

    def __len__(self):
        return len(self._dict)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._items))
        return self._hash

    def __eq__(self, other):
        if isinstance(other, Candidate):
            return self._dict == other._dict
        if isinstance(other, Mapping):
            return self._dict == dict(other)
        return NotImplemented

    def __repr__(self):
        body = ", ".join(f"{k}={v!r}" for k, v in self._items)
        return f"Candidate({body})"

    def active_items(self) -> dict:
        return {k: v for k, v in self._items if v is not INACTIVE}


class SearchSpace:
    """Ordered dimensions plus validity rules; genome position == dimension index."""

    def __init__(self, dims: Sequence[ParamDim], rules: Sequence[ValidityRule] = ()):
        self.dims: tuple[ParamDim, ...] = tuple(dims)
        self.rules: tuple[ValidityRule, ...] = tuple(rules)
        self.names = tuple(d.name for d in self.dims)
        if len(set(self.names)) != len(self.names):
            raise ConfigError(f"duplicate dimension names in {self.names}")
        self._index = {n: i for i, n in enumerate(self.names)}
        self._controlled: dict[str, list[ValidityRule]] = {}
        for rule in self.rules:
            if rule.dim not in self._index:
                raise ConfigError(f"rule guard refers to unknown dimension {rule.dim!r}")
            guard = self.dims[self._index[rule.dim]]
            if guard.kind != "categorical":
                raise ConfigError(f"rule guard {rule.dim!r} must be categorical")
            if not guard.contains(rule.equals):
                raise ConfigError(f"rule guard value {rule.equals!r} not in {rule.dim!r}")
            for name in rule.active:
                if name not in self._index:
                    raise ConfigError(f"rule activates unknown dimension {name!r}")
                if self._index[name] <= self._index[rule.dim]:
                    raise ConfigError(
                        f"dimension {name!r} must come after its guard {rule.dim!r}"
                    )
                self._controlled.setdefault(name, []).append(rule)
        for rule in self.rules:
            if rule.dim in self._controlled:
                raise ConfigError(f"guard {rule.dim!r} is itself conditional; only one guard level is supported")

    def __len__(self):
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __getitem__(self, name: str) -> ParamDim:
        return self.dims[self._index[name]]

    def index(self, name: str) -> int:
        return self._index[name]

    def __repr__(self):
        return f"SearchSpace({list(self.names)}, rules={len(self.rules)})"

    # activity ------------------------------------------------------------
    def is_active(self, name: str, assignment: Mapping) -> bool:
        rules = self._controlled.get(name)
        if rules is None:
            return True
        return any(r.holds(assignment) for r in rules)

    def active_names(self, assignment: Mapping) -> list[str]:
        return [n for n in self.names if self.is_active(n, assignment)]

    # validation ----------------------------------------------------------
    def validate(self, cand: Mapping) -> None:
        for dim in self.dims:
            if dim.name not in cand:
                raise DomainError(f"dimension {dim.name!r} missing from candidate")
            v = cand[dim.name]
            if self.is_active(dim.name, cand):
                if v is INACTIVE or not dim.contains(v):
                    raise DomainError(f"dimension {dim.name!r}: value {v!r} outside domain")
            elif v is not INACTIVE:
                raise DomainError(f"dimension {dim.name!r} is inactive but holds {v!r}")
        extra = set(cand) - set(self.names)
        if extra:
            raise DomainError(f"unknown dimensions in candidate: {sorted(extra)}")

    def is_valid(self, cand: Mapping) -> bool:
        try:
            self.validate(cand)
        except DomainError:
            return False
        return True

    # sampling ------------------------------------------------------------
    def sample(self, rng: np.random.Generator) -> Candidate:
        partial: dict[str, Any] = {}
        for dim in self.dims:
            partial[dim.name] = dim.sample(rng) if self.is_active(dim.name, partial) else INACTIVE
        return Candidate((n, partial[n]) for n in self.names)

    def make(self, **values) -> Candidate:
        """Build a candidate from active values; inactive dims get the sentinel."""
        partial: dict[str, Any] = {}
        for dim in self.dims:
            partial[dim.name] = values.get(dim.name, INACTIVE) if self.is_active(dim.name, partial) else INACTIVE
        unknown = set(values) - set(self.names)
        if unknown:
            raise DomainError(f"unknown dimensions {sorted(unknown)}")
        cand = Candidate((n, partial[n]) for n in self.names)
        self.validate(cand)
        return cand

    # genome --------------------------------------------------------------
    def encode(self, cand: Mapping) -> tuple:
        self.validate(cand)
        return tuple(cand[n] for n in self.names)

    def decode(self, genome: Sequence) -> Candidate:
        if len(genome) != len(self.dims):
            raise DomainError(f"genome length {len(genome)} != {len(self.dims)} dimensions")
        cand = Candidate(zip(self.names, (_freeze(g) for g in genome)))
        self.validate(cand)
        return cand

    def repair(self, genome: Sequence, rng: np.random.Generator) -> tuple:
        """Re-derive activity after genes change.

        Newly inactive genes become the sentinel, newly active ones are
        sampled fresh.
        """
        partial: dict[str, Any] = {}
        for dim, g in zip(self.dims, genome):
            if self.is_active(dim.name, partial):
                partial[dim.name] = dim.sample(rng) if g is INACTIVE else g
            else:
                partial[dim.name] = INACTIVE
        return tuple(partial[n] for n in self.names)

    def active_positions(self, genome: Sequence) -> list[int]:
        assignment = dict(zip(self.names, genome))
        return [i for i, n in enumerate(self.names) if self.is_active(n, assignment)]

    def resample_gene(self, genome: Sequence, position: int, rng: np.random.Generator) -> tuple:
        out = list(genome)
        out[position] = self.dims[position].sample(rng)
        return self.repair(out, rng)

    # grid ----------------------------------------------------------------
    def enumerate_grid(self) -> list[Candidate]:
        """Cross product of grid values restricted by the validity rules.

        Order is lexicographic in (dimension index, grid value index).
        """
        for dim in self.dims:
            if dim.grid_values is None:
                raise ConfigError(f"dimension {dim.name!r} has no grid values")
        out: list[Candidate] = []
        seen: set = set()

        def rec(i: int, partial: dict):
            if i == len(self.dims):
                cand = Candidate((n, partial[n]) for n in self.names)
                if cand not in seen:
                    seen.add(cand)
                    out.append(cand)
                return
            dim = self.dims[i]
            if not self.is_active(dim.name, partial):
                partial[dim.name] = INACTIVE
                rec(i + 1, partial)
            else:
                for v in dim.grid_values:
                    partial[dim.name] = v
                    rec(i + 1, partial)
            del partial[dim.name]

        rec(0, {})
        return out

    def grid_size(self) -> int:
        return len(self.enumerate_grid())

    # config --------------------------------------------------------------
    def to_config(self) -> dict:
        return {
            "dims": [d.to_config() for d in self.dims],
            "rules": [
                {
                    "when": {"dim": r.dim, "equals": list(r.equals) if isinstance(r.equals, tuple) else r.equals},
                    "active": sorted(r.active),
                }
                for r in self.rules
            ],
        }

    @classmethod
    def from_config(cls, cfg: Mapping) -> "SearchSpace":
        extra = set(cfg) - {"dims", "rules"}
        if extra:
            raise ConfigError(f"search space: unknown keys {sorted(extra)}")
        if "dims" not in cfg:
            raise ConfigError("search space needs a 'dims' list")
        dims = [ParamDim.from_config(d) for d in cfg["dims"]]
        rules = [ValidityRule.from_config(r) for r in cfg.get("rules", ())]
        return cls(dims, rules)


def candidate_key(cand: Mapping) -> tuple:
    """Canonical, hashable encoding used by evaluation caches."""
    return tuple((k, repr(v)) for k, v in cand.items())
