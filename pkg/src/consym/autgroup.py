"""Automorphism groups of coloured graphs and contextual symmetry groups of models.

The search is individualisation-refinement: refine the colour partition to
an equitable one, individualise a vertex of the first smallest non-singleton
cell, recurse.  The first leaf reached is the reference; at every level of
that first path the other vertices of the target cell are tried (skipping
those already known to be in the same orbit) and a generator is recorded
whenever a leaf equivalent to the reference is found.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from .colorgraph import ColorGraph, build_color_graph
from .errors import ResourceLimitError
from .model import Context, Model, reduce
from .permgroup import Permutation, PermGroup

SEARCH_NODE_BUDGET = 2_000_000
BRUTE_FORCE_MAX_VERTICES = 10


@dataclass(frozen=True)
class Partition:
    cells: tuple[tuple[int, ...], ...]

    @classmethod
    def from_colors(cls, colors) -> "Partition":
        by_color: dict[int, list[int]] = {}
        for v, c in enumerate(colors):
            by_color.setdefault(c, []).append(v)
        return cls(tuple(tuple(by_color[c]) for c in sorted(by_color)))

    @property
    def is_discrete(self) -> bool:
        return all(len(c) == 1 for c in self.cells)

    def as_sets(self) -> list[frozenset[int]]:
        return [frozenset(c) for c in self.cells]


class _Ordered:
    """Ordered partition stored nauty-style: cells keyed by start position."""

    __slots__ = ("cells", "start_of")

    def __init__(self, cells: dict[int, list[int]], start_of: list[int]):
        self.cells = cells
        self.start_of = start_of

    @classmethod
    def from_cells(cls, cells, n: int) -> "_Ordered":
        out: dict[int, list[int]] = {}
        start_of = [0] * n
        pos = 0
        for c in cells:
            out[pos] = list(c)
            for v in c:
                start_of[v] = pos
            pos += len(c)
        return cls(out, start_of)

    def copy(self) -> "_Ordered":
        return _Ordered({s: list(c) for s, c in self.cells.items()}, list(self.start_of))

    def ordered(self) -> list[list[int]]:
        return [self.cells[s] for s in sorted(self.cells)]

    def individualize(self, v: int) -> int:
        s = self.start_of[v]
        cell = self.cells[s]
        rest = [x for x in cell if x != v]
        self.cells[s] = [v]
        self.cells[s + 1] = rest
        for x in rest:
            self.start_of[x] = s + 1
        return s


def _refine(adj: list[list[int]], part: _Ordered, splitters) -> None:
    """Refine ``part`` in place to the coarsest equitable refinement.

    Cells split by neighbour count into a splitter cell, fragments ordered by
    count; processing order depends only on cell positions, so the result is
    invariant under relabelling.
    """
    queue = deque(sorted(splitters))
    queued = set(queue)
    cells, start_of = part.cells, part.start_of
    while queue:
        w = queue.popleft()
        queued.discard(w)
        count: dict[int, int] = {}
        for x in cells[w]:
            for y in adj[x]:
                count[y] = count.get(y, 0) + 1
        touched = sorted({start_of[y] for y in count})
        for s in touched:
            cell = cells[s]
            if len(cell) == 1:
                continue
            groups: dict[int, list[int]] = {}
            for x in cell:
                groups.setdefault(count.get(x, 0), []).append(x)
            if len(groups) == 1:
                continue
            pos = s
            frags = []
            for key in sorted(groups):
                frag = groups[key]
                cells[pos] = frag
                for x in frag:
                    start_of[x] = pos
                frags.append((pos, len(frag)))
                pos += len(frag)
            if s in queued:
                add = [p for p, _ in frags if p != s]
            else:
                largest = max(frags, key=lambda f: (f[1], -f[0]))[0]
                add = [p for p, _ in frags if p != largest]
            for p in add:
                if p not in queued:
                    queued.add(p)
                    queue.append(p)


def refine(graph: ColorGraph, partition: Partition) -> Partition:
    """Coarsest equitable refinement of ``partition`` (cells in canonical order)."""
    adj = graph.adjacency()
    part = _Ordered.from_cells(partition.cells, graph.num_vertices)
    _refine(adj, part, part.cells.keys())
    return Partition(tuple(tuple(c) for c in part.ordered()))


def _invariant(adj, part: _Ordered) -> tuple:
    """Cell sizes plus the quotient matrix of an equitable partition."""
    sig = []
    for s in sorted(part.cells):
        cell = part.cells[s]
        nb: dict[int, int] = {}
        for y in adj[cell[0]]:
            t = part.start_of[y]
            nb[t] = nb.get(t, 0) + 1
        sig.append((s, len(cell), tuple(sorted(nb.items()))))
    return tuple(sig)


def _target(part: _Ordered) -> int | None:
    best = None
    for s in sorted(part.cells):
        size = len(part.cells[s])
        if size > 1 and (best is None or size < len(part.cells[best])):
            best = s
    return best


class _Search:
    def __init__(self, graph: ColorGraph, budget: int):
        self.graph = graph
        self.n = graph.num_vertices
        self.adj = graph.adjacency()
        self.adjset = [set(a) for a in self.adj]
        self.budget = budget
        self.nodes = 0

    def tick(self):
        self.nodes += 1
        if self.nodes > self.budget:
            raise ResourceLimitError(
                f"automorphism search exceeded {self.budget} nodes; "
                "refusing to return a partial generator set")

    def is_automorphism(self, gamma: list[int]) -> bool:
        colors = self.graph.colors
        for a in range(self.n):
            ga = gamma[a]
            if colors[ga] != colors[a]:
                return False
            nbrs = self.adjset[ga]
            for b in self.adj[a]:
                if gamma[b] not in nbrs:
                    return False
        return True

    def run(self) -> list[list[int]]:
        root = _Ordered.from_cells(Partition.from_colors(self.graph.colors).cells, self.n)
        _refine(self.adj, root, root.cells.keys())
        # first path
        path = []  # (partition before individualising, target start, chosen vertex)
        invariants = [_invariant(self.adj, root)]
        part = root
        while True:
            self.tick()
            t = _target(part)
            if t is None:
                break
            v = min(part.cells[t])
            child = part.copy()
            child.individualize(v)
            _refine(self.adj, child, [t])
            path.append((part, t, v))
            invariants.append(_invariant(self.adj, child))
            part = child
        self.first_leaf = [c[0] for c in part.ordered()]
        self.invariants = invariants
        self.targets = [t for _, t, _ in path]

        generators: list[list[int]] = []
        parent = list(range(self.n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for level in range(len(path) - 1, -1, -1):
            node, t, v = path[level]
            tried = [v]
            for w in sorted(node.cells[t]):
                if any(find(w) == find(x) for x in tried):
                    continue
                tried.append(w)
                child = node.copy()
                child.individualize(w)
                gamma = self.descend(child, t, level + 1)
                if gamma is not None:
                    generators.append(gamma)
                    for a in range(self.n):
                        ra, rb = find(a), find(gamma[a])
                        if ra != rb:
                            parent[ra] = rb
        return generators

    def descend(self, part: _Ordered, splitter: int, level: int) -> list[int] | None:
        """Search below ``part`` for a leaf equivalent to the first leaf."""
        self.tick()
        _refine(self.adj, part, [splitter])
        if _invariant(self.adj, part) != self.invariants[level]:
            return None
        t = _target(part)
        if t is None:
            leaf = [c[0] for c in part.ordered()]
            gamma = [0] * self.n
            for a, b in zip(self.first_leaf, leaf):
                gamma[a] = b
            return gamma if self.is_automorphism(gamma) else None
        if t != self.targets[level]:
            return None
        for w in sorted(part.cells[t]):
            child = part.copy()
            child.individualize(w)
            gamma = self.descend(child, t, level + 1)
            if gamma is not None:
                return gamma
        return None


def automorphism_generators(graph: ColorGraph,
                            budget: int = SEARCH_NODE_BUDGET) -> list[list[int]]:
    """Generators (vertex image lists) of the full colour-preserving automorphism group."""
    if graph.num_vertices == 0:
        return []
    return _Search(graph, budget).run()


def brute_force_automorphisms(graph: ColorGraph,
                              max_vertices: int = BRUTE_FORCE_MAX_VERTICES) -> list[list[int]]:
    """Every automorphism, by enumerating colour-respecting bijections."""
    nv = graph.num_vertices
    if nv > max_vertices:
        raise ResourceLimitError(f"brute force limited to {max_vertices} vertices, got {nv}")
    classes = Partition.from_colors(graph.colors).cells
    edges = {frozenset(e) for e in graph.edges}
    out = []
    for choice in itertools.product(*(itertools.permutations(c) for c in classes)):
        gamma = [0] * nv
        for cls, img in zip(classes, choice):
            for a, b in zip(cls, img):
                gamma[a] = b
        if all(frozenset((gamma[u], gamma[v])) in edges for u, v in graph.edges):
            out.append(gamma)
    return out


def vertex_group_closure(generators, nv: int, cap: int = 1 << 20) -> set[tuple[int, ...]]:
    ident = tuple(range(nv))
    seen = {ident}
    queue = deque([ident])
    while queue:
        p = queue.popleft()
        for g in generators:
            q = tuple(g[x] for x in p)
            if q not in seen:
                seen.add(q)
                if len(seen) > cap:
                    raise ResourceLimitError(f"group larger than cap {cap}")
                queue.append(q)
    return seen


def project_to_variables(graph: ColorGraph, gamma) -> list[int]:
    """Variable permutation induced by a graph automorphism (clause images ignored)."""
    n = graph.num_vars
    theta = [0] * n
    for v in range(n):
        w = gamma[v]
        assert w < n and gamma[n + v] == n + w, "automorphism breaks literal pairing"
        theta[v] = w
    return theta


def model_automorphisms(model: Model, budget: int = SEARCH_NODE_BUDGET) -> list[list[int]]:
    """Generators of the orbital symmetry group of ``model`` over its own ids."""
    graph = build_color_graph(model)
    out, seen = [], set()
    for gamma in automorphism_generators(graph, budget):
        theta = project_to_variables(graph, gamma)
        key = tuple(theta)
        if key != tuple(range(model.n)) and key not in seen:
            seen.add(key)
            out.append(theta)
    return out


def contextual_automorphisms(model: Model, context: Context = Context(),
                             evidence: Context = Context(),
                             budget: int = SEARCH_NODE_BUDGET) -> PermGroup:
    """Contextual symmetry group of ``model`` under ``context`` given ``evidence``.

    Symmetries of the colour graph of the model reduced by context and evidence,
    lifted back to the original ids and extended by the identity on the
    assigned variables.
    """
    assigned = context.union(evidence)
    reduced = reduce(model, assigned)
    gens = []
    for theta in model_automorphisms(reduced, budget):
        img = list(range(model.n))
        for v, w in enumerate(theta):
            img[reduced.origin[v]] = reduced.origin[w]
        gens.append(Permutation(tuple(img)))
    return PermGroup(model.n, tuple(gens), assigned.variables)


def is_model_symmetry(model: Model, theta) -> bool:
    """Does ``theta`` map the weighted clause multiset onto itself?"""
    def key(c, perm):
        return (repr(c.weight), tuple(sorted((perm[v], s) for v, s in c.literals)))
    ident = list(range(model.n))
    before = sorted(key(c, ident) for c in model.clauses)
    after = sorted(key(c, theta) for c in model.clauses)
    return before == after
