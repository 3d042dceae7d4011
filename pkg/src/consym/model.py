"""Weighted-clause graphical models over Boolean variables.

A model is a list of named variables plus weighted clauses.  The unnormalised
log-probability of a state is the sum of the weights of the clauses it
satisfies.  States are ``numpy.uint8`` vectors; in enumerated tables the state
with index ``s`` has variable ``i`` set to bit ``i`` of ``s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, ModelError, ResourceLimitError

ORACLE_MAX_VARS = 20

Literal = tuple[int, bool]


@dataclass(frozen=True)
class Variable:
    id: int
    name: str


@dataclass(frozen=True)
class Clause:
    """Disjunction of literals ``(var id, positive)`` with a log-linear weight."""

    literals: tuple[Literal, ...]
    weight: float

    def __post_init__(self):
        lits = tuple((int(v), bool(s)) for v, s in self.literals)
        object.__setattr__(self, "literals", lits)
        object.__setattr__(self, "weight", float(self.weight))
        if not math.isfinite(self.weight):
            raise ModelError(f"non-finite clause weight {self.weight!r}")
        seen = [v for v, _ in lits]
        if len(set(seen)) != len(seen):
            raise ModelError(f"variable repeated within clause {lits}")

    def satisfied(self, state) -> bool:
        return any(bool(state[v]) == s for v, s in self.literals)


@dataclass(frozen=True)
class Model:
    """Weighted clauses over ``names``.

    ``origin[i]`` is the id variable ``i`` had in the model this one was
    reduced from (identity for unreduced models); reductions compose it.
    """

    names: tuple[str, ...]
    clauses: tuple[Clause, ...] = ()
    origin: tuple[int, ...] | None = field(default=None, compare=True)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "clauses", tuple(self.clauses))
        if len(set(names)) != len(names):
            raise ModelError("duplicate variable names")
        n = len(names)
        if self.origin is None:
            object.__setattr__(self, "origin", tuple(range(n)))
        else:
            object.__setattr__(self, "origin", tuple(int(i) for i in self.origin))
            if len(self.origin) != n:
                raise ModelError("origin map length differs from variable count")
        for c in self.clauses:
            for v, _ in c.literals:
                if not 0 <= v < n:
                    raise ModelError(f"literal references unknown variable id {v}")

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def variables(self) -> list[Variable]:
        return [Variable(i, name) for i, name in enumerate(self.names)]

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    @cached_property
    def var_clauses(self) -> tuple[tuple[int, ...], ...]:
        """Clause ids touching each variable, in clause order."""
        touching: list[list[int]] = [[] for _ in range(self.n)]
        for k, c in enumerate(self.clauses):
            for v, _ in c.literals:
                touching[v].append(k)
        return tuple(tuple(t) for t in touching)

    def var(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def clause(self, weight: float, *lits: str) -> Clause:
        """Build a clause from ``"X"`` / ``"!X"`` literal strings."""
        return Clause(tuple(_parse_lit(tok, self.index) for tok in lits), weight)


def _parse_lit(tok: str, index: Mapping[str, int]) -> Literal:
    tok = tok.strip()
    positive = not tok.startswith("!")
    name = tok if positive else tok[1:].strip()
    if name not in index:
        raise ModelError(f"unknown variable {name!r}")
    return index[name], positive


@dataclass(frozen=True)
class Context:
    """Partial assignment ``((var id, value), ...)``, kept sorted by id."""

    bindings: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        b = tuple(sorted((int(v), int(x)) for v, x in self.bindings))
        ids = [v for v, _ in b]
        if len(set(ids)) != len(ids):
            raise ModelError(f"variable repeated in assignment {b}")
        if any(x not in (0, 1) for _, x in b):
            raise ModelError(f"assignment values must be 0 or 1: {b}")
        object.__setattr__(self, "bindings", b)

    @classmethod
    def from_names(cls, model: Model, values: Mapping[str, int]):
        return cls(tuple((model.var(k), int(v)) for k, v in values.items()))

    @property
    def variables(self) -> frozenset[int]:
        return frozenset(v for v, _ in self.bindings)

    def __len__(self):
        return len(self.bindings)

    def __bool__(self):
        return bool(self.bindings)

    def union(self, other: "Context") -> "Context":
        if self.variables & other.variables:
            raise ModelError("context and evidence share variables "
                             f"{sorted(self.variables & other.variables)}")
        return Context(self.bindings + other.bindings)

    def as_dict(self) -> dict[int, int]:
        return dict(self.bindings)


class Evidence(Context):
    """Observed values; conditions the distribution (a context does not)."""


def check_state(model: Model, state) -> np.ndarray:
    s = np.asarray(state, dtype=np.uint8)
    if s.shape != (model.n,):
        raise DimensionError(f"state has shape {s.shape}, model has {model.n} variables")
    return s


def log_weight(model: Model, state) -> float:
    """Sum of weights of the clauses satisfied by ``state``."""
    s = check_state(model, state)
    total = 0.0
    for c in model.clauses:
        if c.satisfied(s):
            total += c.weight
    return total


def consistent(state, assignment: Context) -> bool:
    return all(int(state[v]) == x for v, x in assignment.bindings)


def restrict(state, model: Model) -> np.ndarray:
    """Project an original-model state onto the variables of a reduced ``model``."""
    return np.asarray(state, dtype=np.uint8)[list(model.origin)]


def reduce(model: Model, assignment: Context) -> Model:
    """Substitute ``assignment`` into every clause.

    Satisfied clauses disappear, falsified literals are dropped, and clauses
    left empty are dropped too (they only shift the log-weight by a constant).
    Assigned variables are removed and the rest re-indexed; ``origin`` records
    the mapping back to the unreduced ids.
    """
    values = assignment.as_dict()
    for v in values:
        if not 0 <= v < model.n:
            raise ModelError(f"assignment references unknown variable id {v}")
    kept = [i for i in range(model.n) if i not in values]
    new_id = {old: new for new, old in enumerate(kept)}
    clauses = []
    for c in model.clauses:
        lits = []
        satisfied = False
        for v, s in c.literals:
            if v in values:
                if bool(values[v]) == s:
                    satisfied = True
                    break
            else:
                lits.append((new_id[v], s))
        if not satisfied and lits:
            clauses.append(Clause(tuple(lits), c.weight))
    return Model(tuple(model.names[i] for i in kept), tuple(clauses),
                 tuple(model.origin[i] for i in kept))


def reduction_constant(model: Model, assignment: Context) -> float:
    """Weight of clauses that ``assignment`` alone satisfies.

    For any state consistent with the assignment,
    ``log_weight(model, s) == log_weight(reduce(model, a), restrict(s)) + constant``.
    """
    values = assignment.as_dict()
    return sum(c.weight for c in model.clauses
               if any(v in values and bool(values[v]) == s for v, s in c.literals))


# -- enumeration oracles -----------------------------------------------------

def all_states(n: int) -> np.ndarray:
    """``(2**n, n)`` matrix; row ``s`` holds the bits of ``s`` (bit i = variable i)."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def state_index(state) -> int:
    return int(sum(int(b) << i for i, b in enumerate(state)))


def log_weights_all(model: Model, max_vars: int = ORACLE_MAX_VARS) -> np.ndarray:
    """Log-weight of every state, indexed by the bit convention above."""
    n = model.n
    if n > max_vars:
        raise ResourceLimitError(f"oracle scale exceeded: {n} variables > cap {max_vars}")
    states = all_states(n).astype(bool)
    lw = np.zeros(1 << n)
    for c in model.clauses:
        sat = np.zeros(1 << n, dtype=bool)
        for v, s in c.literals:
            sat |= states[:, v] if s else ~states[:, v]
        lw[sat] += c.weight
    return lw


def exact_distribution(model: Model, max_vars: int = ORACLE_MAX_VARS,
                       evidence: Context | None = None) -> np.ndarray:
    """Probability of every state by brute-force enumeration.

    With ``evidence`` the result is the conditional distribution (zero on
    inconsistent states).
    """
    lw = log_weights_all(model, max_vars)
    if evidence:
        mask = consistent_mask(model.n, evidence)
        lw = np.where(mask, lw, -np.inf)
    p = np.exp(lw - lw.max())
    return p / p.sum()


def consistent_mask(n: int, assignment: Context) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    mask = np.ones(1 << n, dtype=bool)
    for v, x in assignment.bindings:
        mask &= ((idx >> v) & 1) == x
    return mask


def marginals_from_table(probs: np.ndarray, n: int) -> np.ndarray:
    """``P(X_i = 1)`` for every variable from a full state table."""
    idx = np.arange(len(probs), dtype=np.int64)
    return np.array([probs[((idx >> i) & 1) == 1].sum() for i in range(n)])


# -- text formats -------------------------------------------------------------

def parse_model(text: str) -> Model:
    names: list[str] = []
    index: dict[str, int] = {}
    pending: list[tuple[int, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("var ") or line == "var":
            name = line[3:].strip()
            if not name or any(ch in name for ch in " \t|!:=#"):
                raise ModelError(f"line {lineno}: bad variable name {name!r}")
            if name in index:
                raise ModelError(f"line {lineno}: duplicate variable {name!r}")
            index[name] = len(names)
            names.append(name)
        elif ":" in line:
            w, body = line.split(":", 1)
            pending.append((lineno, w.strip(), body))
        else:
            raise ModelError(f"line {lineno}: cannot parse {raw!r}")
    clauses = []
    for lineno, w, body in pending:
        try:
            weight = float(w)
        except ValueError:
            raise ModelError(f"line {lineno}: bad weight {w!r}") from None
        if not math.isfinite(weight):
            raise ModelError(f"line {lineno}: non-finite weight {w!r}")
        toks = [t for t in body.split("|")]
        if not all(t.strip() for t in toks):
            raise ModelError(f"line {lineno}: empty literal")
        try:
            clauses.append(Clause(tuple(_parse_lit(t, index) for t in toks), weight))
        except ModelError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    return Model(tuple(names), tuple(clauses))


def format_lit(model: Model, lit: Literal) -> str:
    v, s = lit
    return model.names[v] if s else "!" + model.names[v]


def dump_model(model: Model) -> str:
    lines = [f"var {name}" for name in model.names]
    for c in model.clauses:
        lits = " | ".join(format_lit(model, lit) for lit in c.literals)
        lines.append(f"{c.weight!r} : {lits}")
    return "\n".join(lines) + "\n"


def load_model(path) -> Model:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def save_model(model: Model, path) -> None:
    Path(path).write_text(dump_model(model), encoding="utf-8")


def parse_assignment(text: str, model: Model, cls=Context) -> Context:
    values: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, val = line.partition("=")
        name, val = name.strip(), val.strip()
        if not sep or val not in ("0", "1"):
            raise ModelError(f"line {lineno}: expected <name>=0|1, got {raw!r}")
        if name in values:
            raise ModelError(f"line {lineno}: duplicate binding for {name!r}")
        values[name] = int(val)
    return cls.from_names(model, values)


def dump_assignment(model: Model, assignment: Context) -> str:
    return "".join(f"{model.names[v]}={x}\n" for v, x in assignment.bindings)


def load_assignment(path, model: Model, cls=Context) -> Context:
    return parse_assignment(Path(path).read_text(encoding="utf-8"), model, cls)


def build_model(names: Sequence[str], clauses: Iterable[tuple[float, Sequence[str]]]) -> Model:
    """Convenience constructor: ``build_model(["P", "Q"], [(1.5, ["P", "!Q"])])``."""
    index = {name: i for i, name in enumerate(names)}
    if len(index) != len(names):
        raise ModelError("duplicate variable names")
    return Model(tuple(names),
                 tuple(Clause(tuple(_parse_lit(t, index) for t in lits), w)
                       for w, lits in clauses))
