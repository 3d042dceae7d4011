"""Vertex-coloured graph encoding of a clause model.

Vertex layout for a model with ``n`` variables and ``m`` clauses:
``0..n-1`` positive literals, ``n..2n-1`` negative literals,
``2n..2n+m-1`` clauses.  Colour 0 marks positive literals, colour 1 negative
literals, and colours ``2..`` one per distinct clause weight (in increasing
weight order).  Weights are compared exactly, never within a tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

from .model import Model


@dataclass(frozen=True)
class ColorGraph:
    num_vars: int
    colors: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def num_vertices(self) -> int:
        return len(self.colors)

    @property
    def num_clauses(self) -> int:
        return self.num_vertices - 2 * self.num_vars

    def provenance(self, vertex: int) -> tuple[str, int]:
        """``("pos", v)``, ``("neg", v)`` or ``("clause", k)``."""
        n = self.num_vars
        if vertex < n:
            return "pos", vertex
        if vertex < 2 * n:
            return "neg", vertex - n
        return "clause", vertex - 2 * n

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def to_dimacs(self) -> str:
        lines = [f"p edge {self.num_vertices} {len(self.edges)}"]
        lines += [f"n {v} {c}" for v, c in enumerate(self.colors)]
        lines += [f"e {u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


def build_color_graph(model: Model) -> ColorGraph:
    n, m = model.n, len(model.clauses)
    # repr() round-trips floats exactly, so equal keys <=> equal weights
    palette = {key: 2 + i for i, key in enumerate(
        sorted({repr(c.weight) for c in model.clauses}, key=float))}
    colors = [0] * n + [1] * n + [palette[repr(c.weight)] for c in model.clauses]
    edges = [(v, n + v) for v in range(n)]
    for k, c in enumerate(model.clauses):
        for v, positive in c.literals:
            edges.append((2 * n + k, v if positive else n + v))
    assert len(colors) == 2 * n + m
    return ColorGraph(n, tuple(colors), tuple(edges))


def graph_from_edges(colors, edges) -> ColorGraph:
    """Plain coloured graph (no model provenance) for testing the search."""
    return ColorGraph(0, tuple(int(c) for c in colors),
                      tuple((int(u), int(v)) for u, v in edges))
