"""Variable permutations, generated groups, orbits and orbit sampling."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .model import Context, consistent

ORBIT_CAP = 1 << 16
PR_SLOTS = 10
PR_BURN_IN = 50


@dataclass(frozen=True)
class Permutation:
    """Bijection on ``0..n-1``; variable ``i`` is sent to ``image[i]``."""

    image: tuple[int, ...]

    def __post_init__(self):
        img = tuple(int(x) for x in self.image)
        if sorted(img) != list(range(len(img))):
            raise ValueError(f"not a permutation: {img}")
        object.__setattr__(self, "image", img)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_cycles(cls, n: int, *cycles: Sequence[int]) -> "Permutation":
        img = list(range(n))
        for cyc in cycles:
            for a, b in zip(cyc, list(cyc[1:]) + [cyc[0]]):
                img[a] = b
        return cls(tuple(img))

    @property
    def degree(self) -> int:
        return len(self.image)

    def __call__(self, i: int) -> int:
        return self.image[i]

    def __mul__(self, other: "Permutation") -> "Permutation":
        """``(p * q)(i) == p(q(i))``: apply ``q`` first."""
        if self.degree != other.degree:
            raise DimensionError("permutation degrees differ")
        return Permutation(tuple(self.image[j] for j in other.image))

    def inverse(self) -> "Permutation":
        inv = [0] * self.degree
        for i, j in enumerate(self.image):
            inv[j] = i
        return Permutation(tuple(inv))

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.image))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, j in enumerate(self.image) if i != j)

    def cycles(self) -> list[tuple[int, ...]]:
        seen = set()
        out = []
        for start in range(self.degree):
            if start in seen or self.image[start] == start:
                continue
            cyc = [start]
            seen.add(start)
            j = self.image[start]
            while j != start:
                cyc.append(j)
                seen.add(j)
                j = self.image[j]
            out.append(tuple(cyc))
        return out

    def cycle_notation(self, names: Sequence[str] | None = None) -> str:
        cyc = self.cycles()
        if not cyc:
            return "()"
        label = (lambda i: names[i]) if names is not None else str
        return "".join("(" + " ".join(label(i) for i in c) + ")" for c in cyc)


def apply(perm: Permutation, state) -> np.ndarray:
    """Transport values with their variables: ``result[perm(i)] = state[i]``."""
    s = np.asarray(state, dtype=np.uint8)
    if s.shape != (perm.degree,):
        raise DimensionError(f"state of length {s.shape} vs permutation degree {perm.degree}")
    out = np.empty_like(s)
    out[np.asarray(perm.image, dtype=np.intp)] = s
    return out


@dataclass(frozen=True)
class PermGroup:
    """Group generated by ``generators``; every generator fixes ``fixed_set``."""

    degree: int
    generators: tuple[Permutation, ...] = ()
    fixed_set: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "fixed_set", frozenset(self.fixed_set))
        for g in self.generators:
            if g.degree != self.degree:
                raise DimensionError("generator degree differs from group degree")
            assert all(g.image[x] == x for x in self.fixed_set), "generator moves a fixed variable"

    @property
    def is_trivial(self) -> bool:
        return all(g.is_identity() for g in self.generators)

    @property
    def support(self) -> tuple[int, ...]:
        pts = set()
        for g in self.generators:
            pts.update(g.support)
        return tuple(sorted(pts))

    def closure(self, cap: int = ORBIT_CAP) -> set[Permutation]:
        """All group elements (small groups only)."""
        ident = Permutation.identity(self.degree)
        seen = {ident}
        queue = deque([ident])
        while queue:
            p = queue.popleft()
            for g in self.generators:
                q = g * p
                if q not in seen:
                    seen.add(q)
                    if len(seen) > cap:
                        raise ResourceLimitError(f"group larger than cap {cap}")
                    queue.append(q)
        return seen

    def contains(self, perm: Permutation, cap: int = ORBIT_CAP) -> bool:
        return perm in self.closure(cap)

    def __str__(self):
        if self.is_trivial:
            return "<()>"
        return "<" + ", ".join(g.cycle_notation() for g in self.generators) + ">"


def orbit(group: PermGroup, state, context: Context = Context(),
          cap: int = ORBIT_CAP) -> set[bytes]:
    """Contextual orbit of ``state`` as a set of ``bytes`` keys (see ``state_key``).

    Empty when ``state`` is inconsistent with ``context``.
    """
    s = np.asarray(state, dtype=np.uint8)
    if not consistent(s, context):
        return set()
    start = s.tobytes()
    seen = {start}
    queue = deque([s])
    perms = [np.asarray(g.image, dtype=np.intp) for g in group.generators]
    while queue:
        cur = queue.popleft()
        for img in perms:
            nxt = np.empty_like(cur)
            nxt[img] = cur
            key = nxt.tobytes()
            if key not in seen:
                assert consistent(nxt, context), "group element changed a context variable"
                seen.add(key)
                if len(seen) > cap:
                    raise ResourceLimitError(f"orbit larger than cap {cap}")
                queue.append(nxt)
    return seen


def state_key(state) -> bytes:
    return np.asarray(state, dtype=np.uint8).tobytes()


def key_state(key: bytes) -> np.ndarray:
    return np.frombuffer(key, dtype=np.uint8).copy()


def sorted_orbit(group: PermGroup, state, context: Context = Context(),
                 cap: int = ORBIT_CAP) -> list[bytes]:
    return sorted(orbit(group, state, context, cap))


class PrSampler:
    """Product-replacement random group elements.

    ``slots`` holds ``k`` group elements (rows of an int array), initialised by
    cycling through the generators; ``k`` is raised to the number of
    generators when needed so the slots always generate the whole group.  The
    burn-in steps use the sampler's own seed; ``clone`` gives an independent
    copy for another chain.
    """

    def __init__(self, group: PermGroup, k: int = PR_SLOTS, seed: int = 0,
                 burn_in: int = PR_BURN_IN):
        self.group = group
        gens = [g for g in group.generators if not g.is_identity()]
        self.trivial = not gens
        n = group.degree
        if self.trivial:
            self.slots = np.arange(n, dtype=np.int32)[None, :].copy()
        else:
            k = max(k, len(gens), 2)
            self.slots = np.array([gens[i % len(gens)].image for i in range(k)], dtype=np.int32)
        self.support = np.asarray(group.support, dtype=np.int32)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.burned = 0
        for _ in range(burn_in):
            pr_step(self)

    @property
    def k(self) -> int:
        return len(self.slots)

    def clone(self, rng: np.random.Generator | None = None) -> "PrSampler":
        other = object.__new__(PrSampler)
        other.group = self.group
        other.trivial = self.trivial
        other.slots = self.slots.copy()
        other.support = self.support
        other.seed = self.seed
        other.rng = rng if rng is not None else np.random.default_rng(self.seed)
        other.burned = self.burned
        return other


def pr_replace(slots: np.ndarray, support: np.ndarray, u_i: float, u_j: float,
               u_side: float) -> int:
    """One replacement ``slot_i <- slot_i*slot_j`` or ``slot_j*slot_i``; returns ``i``.

    Shared by the pure-Python step code so both kernels consume random draws
    identically.  Only points in ``support`` can move, so only those are
    recomposed.
    """
    k = len(slots)
    i = int(u_i * k)
    j = int(u_j * (k - 1))
    if j >= i:
        j += 1
    a, b = (slots[i], slots[j]) if u_side < 0.5 else (slots[j], slots[i])
    # (a*b)(x) = a[b[x]]
    new = slots[i].copy()
    new[support] = a[b[support]]
    slots[i] = new
    return i


def pr_step(sampler: PrSampler, rng: np.random.Generator | None = None) -> Permutation:
    """Advance the sampler one replacement and return the new element."""
    if sampler.trivial:
        return Permutation(tuple(sampler.slots[0]))
    r = rng if rng is not None else sampler.rng
    i = pr_replace(sampler.slots, sampler.support, r.random(), r.random(), r.random())
    sampler.burned += 1
    return Permutation(tuple(sampler.slots[i]))


def sample_orbit(group: PermGroup, state, sampler: PrSampler,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Approximately uniform draw from the orbit of ``state``."""
    if sampler.trivial:
        return np.asarray(state, dtype=np.uint8).copy()
    return apply(pr_step(sampler, rng), state)


def exact_uniform_orbit_sample(group: PermGroup, state, rng: np.random.Generator,
                               context: Context = Context(),
                               cap: int = ORBIT_CAP) -> np.ndarray:
    """Exactly uniform draw, by enumerating the orbit."""
    members = sorted_orbit(group, state, context, cap)
    if len(members) == 1:
        return key_state(members[0])
    return key_state(members[int(rng.random() * len(members))])


def group_from_cycles(n: int, cycles: Iterable[Sequence[Sequence[int]]],
                      fixed: Iterable[int] = ()) -> PermGroup:
    return PermGroup(n, tuple(Permutation.from_cycles(n, *c) for c in cycles), frozenset(fixed))
