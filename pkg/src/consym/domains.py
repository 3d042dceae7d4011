"""Generators for the benchmark model families.

Sports Network
    ``Sport`` (1 = tennis, 0 = badminton), ``S_i`` (student ``i`` plays
    singles) and ``D_i_j`` (same-dorm students ``i < j`` play doubles).  Each
    dorm is split into training groups twice, once per sport.  By default the
    badminton groups are the tennis groups with a few students traded between
    groups (``group_layout="swapped"``); ``"independent"`` draws a second
    random partition and ``"crossed"`` makes every tennis group meet every
    badminton group in exactly one student.  Within a group, every pair
    carries the same sport-gated coupling clause.  Every group has its own
    weights.  With ``"crossed"`` no permutation is symmetric without a
    context; a swapped layout leaves the untouched groups symmetric.  The
    shipped desk-scale configs use ``"crossed"`` for the two-sided model and
    identical partitions (``group_swaps=0``) for the single-side one.

Young and Old
    ``IsYoung``, ``Smokes_i``, ``Cancer_i``, ``EatsOut_i``, ``Friends_i_j``
    (ordered pairs).  Smoking weights are shared on the young side and
    person-specific on the old side; eating-out weights the other way round.

Single-side variants perturb the weights of the symmetric block on one side
only, so symmetries remain under a single value of the context variable.
Perturbed weights are rounded to 12 significant digits so equal weights are
exactly equal and unequal ones stay distinct.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from itertools import combinations, permutations
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import Clause, Context, Evidence, Model

DATA_DIR = Path(__file__).parent / "data"


def _round12(x: float) -> float:
    return float(f"{x:.12g}")


def _check_finite(params) -> None:
    for f in fields(params):
        v = getattr(params, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{f.name} must be finite")


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.clauses: list[Clause] = []

    def var(self, name: str) -> int:
        self.index[name] = len(self.names)
        self.names.append(name)
        return self.index[name]

    def clause(self, weight: float, *lits: str) -> None:
        parsed = []
        for tok in lits:
            pos = not tok.startswith("!")
            parsed.append((self.index[tok if pos else tok[1:]], pos))
        self.clauses.append(Clause(tuple(parsed), weight))

    def build(self) -> Model:
        return Model(tuple(self.names), tuple(self.clauses))


# -- Sports Network ---------------------------------------------------------------

GROUP_LAYOUTS = ("swapped", "independent", "crossed")

@dataclass(frozen=True)
class SportsParams:
    num_students: int = 25
    dorm_size: int = 25
    group_size: int = 5
    sport_prior: float = 0.0
    participation: float = 8.0
    coupling: float = 16.0
    group_spread: float = 0.01
    doubles: float = 0.3
    doubles_prior: float = 1.0
    single_side: bool = False
    perturbation: float = 0.2
    group_layout: str = "swapped"
    group_swaps: int = 2
    seed: int = 0

    def __post_init__(self):
        _check_finite(self)
        if self.group_layout not in GROUP_LAYOUTS:
            raise ConfigError(f"group_layout must be one of {', '.join(GROUP_LAYOUTS)}")
        if self.group_swaps < 0:
            raise ConfigError("group_swaps must be >= 0")
        if self.num_students < 1 or self.dorm_size < 1 or self.group_size < 1:
            raise ConfigError("sizes must be positive")
        if self.num_students % self.dorm_size:
            raise ConfigError("num_students must be a multiple of dorm_size")
        if self.dorm_size % self.group_size:
            raise ConfigError("dorm_size must be divisible by group_size")
        if self.group_layout == "crossed" and self.dorm_size != self.group_size ** 2:
            raise ConfigError("the crossed layout needs dorm_size == group_size ** 2")
        if self.perturbation < 0:
            raise ConfigError("perturbation must be >= 0")


def sports_groups(params: SportsParams) -> tuple[list[list[int]], list[list[int]]]:
    """``(tennis_groups, badminton_groups)`` as lists of student ids."""
    rng = np.random.default_rng([params.seed, 1])
    g = params.group_size
    m = params.dorm_size // g
    tennis, badminton = [], []
    for d in range(params.num_students // params.dorm_size):
        students = d * params.dorm_size + rng.permutation(params.dorm_size)
        grid = students.reshape(m, g)
        tennis += [sorted(int(x) for x in row) for row in grid]
        if params.group_layout == "crossed":
            other = grid.T
        elif params.group_layout == "independent":
            other = (d * params.dorm_size + rng.permutation(params.dorm_size)).reshape(m, g)
        else:
            other = grid.copy()
            for _ in range(params.group_swaps if m > 1 else 0):
                g1, g2 = rng.choice(m, 2, replace=False)
                a, b = rng.integers(g), rng.integers(g)
                other[g1, a], other[g2, b] = other[g2, b], other[g1, a]
        badminton += [sorted(int(x) for x in row) for row in other]
    return tennis, badminton


def gen_sports(params: SportsParams = SportsParams()) -> tuple[Model, tuple[int, ...]]:
    """Sports Network model and its context variable set ``(Sport,)``."""
    tennis, badminton = sports_groups(params)
    b = _Builder()
    b.var("Sport")
    N = params.num_students
    for i in range(N):
        b.var(f"S_{i}")
    pairs = [(i, j) for d in range(N // params.dorm_size)
             for i, j in combinations(range(d * params.dorm_size, (d + 1) * params.dorm_size), 2)]
    for i, j in pairs:
        b.var(f"D_{i}_{j}")

    if params.sport_prior:
        b.clause(params.sport_prior, "Sport")
    rng = np.random.default_rng([params.seed, 2])
    noise = rng.normal(0.0, params.perturbation, N)
    spread = params.group_spread
    for gi, grp in enumerate(tennis):
        off = spread * (2 * gi + 1)
        for i in grp:
            b.clause(_round12(params.participation + off), "!Sport", f"S_{i}")
        for i, j in combinations(grp, 2):
            b.clause(_round12(params.coupling + off), "!Sport", f"!S_{i}", f"!S_{j}")
    for gi, grp in enumerate(badminton):
        off = spread * (2 * gi + 2)
        for i in grp:
            w = params.participation + off + (noise[i] if params.single_side else 0.0)
            b.clause(_round12(w), "Sport", f"S_{i}")
        for i, j in combinations(grp, 2):
            b.clause(_round12(params.coupling + off), "Sport", f"!S_{i}", f"!S_{j}")
    for i, j in pairs:
        b.clause(params.doubles, f"!S_{i}", f"!S_{j}", f"D_{i}_{j}")
        b.clause(params.doubles_prior, f"!D_{i}_{j}")
    return b.build(), (0,)


# -- Young and Old ----------------------------------------------------------------

@dataclass(frozen=True)
class YoungOldParams:
    num_people: int = 10
    young_prior: float = 0.0
    young_smokes: float = 0.3
    old_not_smokes: float = 0.3
    young_eats_out: float = 0.3
    old_not_eats_out: float = 0.3
    smoking_cancer: float = 1.5
    friends_smoke: float = 1.1
    cancer_prior: float = 1.0
    friends_prior: float = 1.5
    std: float = 0.2
    single_side: bool = False
    seed: int = 0

    def __post_init__(self):
        _check_finite(self)
        if self.num_people < 1:
            raise ConfigError("num_people must be positive")
        if self.std < 0:
            raise ConfigError("std must be >= 0")


def gen_young_old(params: YoungOldParams = YoungOldParams()) -> tuple[Model, tuple[int, ...]]:
    """Young and Old model and its context variable set ``(IsYoung,)``."""
    N = params.num_people
    b = _Builder()
    b.var("IsYoung")
    for pred in ("Smokes", "Cancer", "EatsOut"):
        for i in range(N):
            b.var(f"{pred}_{i}")
    ordered = list(permutations(range(N), 2))
    for i, j in ordered:
        b.var(f"Friends_{i}_{j}")

    rng = np.random.default_rng([params.seed, 3])
    old_smoke_noise = rng.normal(0.0, params.std, N)
    young_eat_noise = rng.normal(0.0, params.std, N)
    old_eat_noise = rng.normal(0.0, params.std, N)

    if params.young_prior:
        b.clause(params.young_prior, "IsYoung")
    for i in range(N):
        b.clause(params.young_smokes, "!IsYoung", f"Smokes_{i}")
        b.clause(_round12(params.old_not_smokes + old_smoke_noise[i]), "IsYoung", f"!Smokes_{i}")
        b.clause(_round12(params.young_eats_out + young_eat_noise[i]), "!IsYoung", f"EatsOut_{i}")
        w = params.old_not_eats_out + (old_eat_noise[i] if params.single_side else 0.0)
        b.clause(_round12(w), "IsYoung", f"!EatsOut_{i}")
        b.clause(params.smoking_cancer, f"!Smokes_{i}", f"Cancer_{i}")
        b.clause(params.cancer_prior, f"!Cancer_{i}")
    for i, j in ordered:
        b.clause(params.friends_smoke, f"!Friends_{i}_{j}", f"!Smokes_{i}", f"Smokes_{j}")
        b.clause(params.friends_prior, f"!Friends_{i}_{j}")
    return b.build(), (0,)


# -- small worked example ------------------------------------------------------------

def movie_model(romantic_each: float = 1.0, romantic_together: float = 1.5,
                thriller_a: float = 0.2, thriller_b: float = 1.0,
                genre_prior: float = 0.3) -> Model:
    """Genre ``G`` (1 = romantic), persons ``A`` and ``B`` going to the movie.

    Romantic: each goes with the same weight and going alone is penalised
    symmetrically.  Thriller: A and B act independently and A is less keen.
    """
    b = _Builder()
    for name in ("G", "A", "B"):
        b.var(name)
    b.clause(genre_prior, "G")
    b.clause(romantic_each, "!G", "A")
    b.clause(romantic_each, "!G", "B")
    b.clause(romantic_together, "!G", "!A", "B")
    b.clause(romantic_together, "!G", "A", "!B")
    b.clause(thriller_a, "G", "A")
    b.clause(thriller_b, "G", "B")
    return b.build()


# -- config files ----------------------------------------------------------------------

DOMAINS = {"sports": (SportsParams, gen_sports), "young_old": (YoungOldParams, gen_young_old)}


def _coerce(cls, key: str, value: str):
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown parameter {key!r} for {cls.__name__}")
    t = types[key]
    if t in (bool, "bool"):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if t in (str, "str"):
        return value
    try:
        return int(value) if t in (int, "int") else float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def parse_params(text: str, domain: str | None = None):
    """Parse ``key=value`` lines; ``domain=sports|young_old`` may appear in the text."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        values[key.strip()] = val.strip()
    domain = values.pop("domain", domain)
    if domain not in DOMAINS:
        raise ConfigError(f"unknown domain {domain!r}; expected one of {sorted(DOMAINS)}")
    cls = DOMAINS[domain][0]
    return domain, cls(**{k: _coerce(cls, k, v) for k, v in values.items()})


def with_overrides(params, **overrides):
    return replace(params, **overrides)


def load_params(path, domain: str | None = None):
    return parse_params(Path(path).read_text(encoding="utf-8"), domain)


def generate(domain: str, params) -> tuple[Model, tuple[int, ...]]:
    return DOMAINS[domain][1](params)


def default_config_path(domain: str, single_side: bool = False) -> Path:
    return DATA_DIR / f"{domain}{'_single' if single_side else ''}.cfg"


def default_params(domain: str, single_side: bool = False):
    """Shipped desk-scale parameters for ``domain``, or the dataclass defaults."""
    path = default_config_path(domain, single_side)
    if path.exists():
        return load_params(path, domain)[1]
    return replace(DOMAINS[domain][0](), single_side=single_side)


def resolve_config_path(value, base_dir=None) -> Path:
    """A config path, or the name of a shipped config such as ``sports_single``."""
    path = Path(value)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.exists() and (DATA_DIR / f"{value}.cfg").exists():
        return DATA_DIR / f"{value}.cfg"
    return path


def params_to_text(domain: str, params) -> str:
    lines = [f"domain={domain}"]
    for f in fields(params):
        v = getattr(params, f.name)
        if isinstance(v, bool):
            text = str(v).lower()
        elif isinstance(v, str):
            text = v
        else:
            text = repr(v)
        lines.append(f"{f.name}={text}")
    return "\n".join(lines) + "\n"


def context_sidecar(model: Model, context_vars, evidence: Context = Context()) -> str:
    """Sidecar text: ``context <name>`` lines then ``<name>=0|1`` evidence lines."""
    lines = [f"context {model.names[v]}" for v in context_vars]
    lines += [f"{model.names[v]}={x}" for v, x in evidence.bindings]
    return "\n".join(lines) + "\n"


def parse_sidecar(text: str, model: Model) -> tuple[tuple[int, ...], Context]:
    ctx, ev = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("context "):
            ctx.append(model.var(line[8:].strip()))
        else:
            name, sep, val = line.partition("=")
            if not sep or val.strip() not in ("0", "1"):
                raise ConfigError(f"line {lineno}: expected 'context <name>' or <name>=0|1")
            ev[name.strip()] = int(val)
    return tuple(ctx), Evidence.from_names(model, ev)
