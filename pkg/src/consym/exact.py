"""Exact marginals for models too large for plain enumeration.

Variables whose Markov blanket has at most ``max_blanket`` members are summed
out analytically (an independent set of them, so every blanket stays in the
enumerated core).  The log-weight over the core is written as a multilinear
polynomial; variables that appear in monomials of degree > 2 are enumerated
explicitly ("outer"), and for each outer assignment the remaining energy is
quadratic, so the inner states are scored in blocks with matrix products.
First and second moments of the core give the marginals of the core and,
through their blankets, of the summed-out variables.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.special import expit, logsumexp

from .errors import ResourceLimitError
from .model import Context, Model, reduce

MAX_ENUMERATED = 26
MAX_OUTER = 8
CHUNK_BITS = 18


def _mobius(table: np.ndarray, k: int) -> np.ndarray:
    """Multilinear coefficients of a function on ``{0,1}^k`` (index bit i = var i)."""
    coef = table.astype(np.float64).copy()
    for i in range(k):
        bit = 1 << i
        for s in range(1 << k):
            if s & bit:
                coef[s] -= coef[s ^ bit]
    return coef


def _clause_table(lits, scope) -> np.ndarray:
    pos = {v: i for i, v in enumerate(scope)}
    k = len(scope)
    idx = np.arange(1 << k)
    sat = np.zeros(1 << k, dtype=bool)
    for v, s in lits:
        bit = (idx >> pos[v]) & 1
        sat |= bit.astype(bool) if s else ~bit.astype(bool)
    return sat


def _add_poly(poly: dict, scope, table: np.ndarray) -> None:
    coef = _mobius(table, len(scope))
    for s, c in enumerate(coef):
        if c != 0.0:
            mono = tuple(sorted(scope[i] for i in range(len(scope)) if s >> i & 1))
            poly[mono] = poly.get(mono, 0.0) + c


def _choose_outer(poly: dict) -> list[int]:
    outer: set[int] = set()
    while True:
        heavy = [m for m in poly if len([v for v in m if v not in outer]) > 2]
        if not heavy:
            return sorted(outer)
        counts: dict[int, int] = {}
        for m in heavy:
            for v in m:
                if v not in outer:
                    counts[v] = counts.get(v, 0) + 1
        outer.add(max(sorted(counts), key=lambda v: counts[v]))


def exact_marginals(model: Model, evidence: Context = Context(),
                    max_enumerated: int = MAX_ENUMERATED, max_blanket: int = 2) -> np.ndarray:
    """``P(X_i = 1 | evidence)`` for every variable of ``model``."""
    red = reduce(model, evidence)
    n = red.n
    scopes = [tuple(sorted(v for v, _ in c.literals)) for c in red.clauses]
    nbrs = [set() for _ in range(n)]
    for sc in scopes:
        for v in sc:
            nbrs[v].update(u for u in sc if u != v)

    eliminated: list[int] = []
    blocked: set[int] = set()
    for v in sorted(range(n), key=lambda v: (len(nbrs[v]), v)):
        if len(nbrs[v]) <= max_blanket and v not in blocked:
            eliminated.append(v)
            blocked.add(v)
            blocked.update(nbrs[v])
    elim_set = set(eliminated)
    core = [v for v in range(n) if v not in elim_set]
    if len(core) > max_enumerated:
        raise ResourceLimitError(
            f"oracle scale exceeded: {len(core)} variables left to enumerate > cap {max_enumerated}")

    poly: dict[tuple[int, ...], float] = {}
    touching: dict[int, list[int]] = {v: [] for v in eliminated}
    for k, (c, sc) in enumerate(zip(red.clauses, scopes)):
        hit = [v for v in sc if v in elim_set]
        if hit:
            touching[hit[0]].append(k)
        else:
            _add_poly(poly, sc, c.weight * _clause_table(c.literals, sc))

    # per eliminated variable: log-weight table over (v, blanket...) with v as bit 0
    elim_tables = {}
    for v in eliminated:
        blanket = sorted(nbrs[v])
        scope = [v] + blanket
        table = np.zeros(1 << len(scope))
        for k in touching[v]:
            c = red.clauses[k]
            sub = _clause_table(c.literals, scope)
            table += c.weight * sub
        elim_tables[v] = (blanket, table)
        summed = np.logaddexp(table[0::2], table[1::2])
        _add_poly(poly, blanket, summed)

    outer = [v for v in _choose_outer(poly) if v in set(core)]
    if len(outer) > MAX_OUTER:
        raise ResourceLimitError(f"too many variables in higher-order terms ({len(outer)})")
    inner = [v for v in core if v not in set(outer)]
    pos_core = {v: i for i, v in enumerate(core)}
    pos_inner = {v: i for i, v in enumerate(inner)}
    nc, ni = len(core), len(inner)

    logZ = -np.inf
    M1 = np.zeros(nc)
    M2 = np.zeros((nc, nc))
    for ovals in itertools.product((0, 1), repeat=len(outer)):
        fixed = dict(zip(outer, ovals))
        const = 0.0
        h = np.zeros(ni)
        J = np.zeros((ni, ni))
        for mono, c in poly.items():
            rest = []
            dead = False
            for v in mono:
                if v in fixed:
                    if not fixed[v]:
                        dead = True
                        break
                else:
                    rest.append(v)
            if dead:
                continue
            if not rest:
                const += c
            elif len(rest) == 1:
                h[pos_inner[rest[0]]] += c
            else:
                a, b = pos_inner[rest[0]], pos_inner[rest[1]]
                J[min(a, b), max(a, b)] += c
        xo = np.zeros(nc)
        for v, x in fixed.items():
            xo[pos_core[v]] = x
        inner_cols = np.array([pos_core[v] for v in inner], dtype=np.intp)
        total = 1 << ni
        chunk = min(total, 1 << CHUNK_BITS)
        shifts = np.arange(ni, dtype=np.int64)
        for start in range(0, total, chunk):
            idx = np.arange(start, start + chunk, dtype=np.int64)
            X = ((idx[:, None] >> shifts) & 1).astype(np.float64)
            E = const + X @ h + np.einsum("ij,ij->i", X @ J, X)
            lz = logsumexp(E)
            w = np.exp(E - lz)
            m1_inner = X.T @ w
            m2_inner = X.T @ (X * w[:, None])
            m1 = xo.copy()
            m1[inner_cols] = m1_inner
            # outer rows are constants within the block: E[x_o x_j] = x_o E[x_j]
            cross = np.outer(xo, m1)
            m2 = cross + cross.T - np.outer(xo, xo)
            m2[np.ix_(inner_cols, inner_cols)] = m2_inner
            new = np.logaddexp(logZ, lz)
            a, b = np.exp(logZ - new), np.exp(lz - new)
            M1 = a * M1 + b * m1
            M2 = a * M2 + b * m2
            logZ = new

    marg = np.zeros(n)
    for v in core:
        marg[v] = M1[pos_core[v]]
    for v in eliminated:
        blanket, table = elim_tables[v]
        k = len(blanket)
        # joint distribution of the blanket from core moments (k <= 2)
        probs = np.zeros(1 << k)
        ids = [pos_core[u] for u in blanket]
        if k == 0:
            probs[0] = 1.0
        elif k == 1:
            p = M1[ids[0]]
            probs[:] = [1 - p, p]
        else:
            pa, pb, pab = M1[ids[0]], M1[ids[1]], M2[ids[0], ids[1]]
            probs[:] = [1 - pa - pb + pab, pa - pab, pb - pab, pab]
        odds = table[1::2] - table[0::2]
        marg[v] = float(np.dot(probs, expit(odds)))

    out = np.zeros(model.n)
    for v, x in evidence.bindings:
        out[v] = x
    for i, orig in enumerate(red.origin):
        out[orig] = marg[i]
    return np.clip(out, 0.0, 1.0)
