"""Pure-Python sampling kernel.

Mirrors ``_ckernel.pyx`` draw for draw: every random number is one
``Generator.random()`` call (``next_double`` on the bit generator), taken in
the same order, so both kernels produce identical trajectories for a seed.

Per step:
  1. pick a variable: with probability ``alpha`` a context variable, otherwise
     a free (non-evidence) variable; the ``alpha`` coin is only drawn when
     ``alpha > 0``;
  2. resample it from its Gibbs conditional;
  3. if orbit moves are on and the group of the current context is
     non-trivial, one product-replacement step and apply the new element.

Marginal accumulators are lazy: ``ones[x]`` counts samples with ``x == 1`` up
to sample ``last[x]``; they are only touched when ``x`` changes value.
"""
from __future__ import annotations

import math

IMPLEMENTATION = "python"


def sigmoid(d: float) -> float:
    if d >= 0.0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def blanket_tables(vc_ptr, vc_clause, vc_sign, cl_ptr, lit_var, lit_pos, weights):
    """Per variable: list of ``(weight, own sign, other literals)``."""
    n = len(vc_ptr) - 1
    tables = []
    for v in range(n):
        rows = []
        for a in range(vc_ptr[v], vc_ptr[v + 1]):
            c = int(vc_clause[a])
            others = tuple((int(lit_var[b]), int(lit_pos[b]))
                           for b in range(cl_ptr[c], cl_ptr[c + 1]) if lit_var[b] != v)
            rows.append((float(weights[c]), bool(vc_sign[a]), others))
        tables.append(rows)
    return tables


def delta(table, state) -> float:
    """log w(x=1) - log w(x=0) from the clauses touching x."""
    d = 0.0
    for w, sign, others in table:
        for u, pos in others:
            if state[u] == pos:
                break
        else:
            d += w if sign else -w
    return d


def run_steps(data, state, slots, ones, last, t, nsteps, rng, exact_orbit=None):
    """Advance ``nsteps`` steps in place; returns the new step count.

    ``exact_orbit(c, state_list) -> state_list`` replaces product replacement
    by an exact uniform orbit draw (oracle mode).
    """
    tables = data.py_tables
    free = data.free.tolist()
    nfree = len(free)
    ctx = data.ctx_vars.tolist()
    nctx = len(ctx)
    alpha = data.alpha
    orbit_moves = data.orbit_moves
    kslots = data.kslots.tolist()
    supports = data.supports
    st = state.tolist()
    on = ones.tolist()
    la = last.tolist()
    rnd = rng.random
    slot_rows = [[slots[c, i] for i in range(slots.shape[1])] for c in range(slots.shape[0])]

    for _ in range(nsteps):
        t += 1
        if alpha > 0.0 and rnd() < alpha:
            var = ctx[int(rnd() * nctx)]
        else:
            var = free[int(rnd() * nfree)]
        p = sigmoid(delta(tables[var], st))
        newv = 1 if rnd() < p else 0
        old = st[var]
        if newv != old:
            if old:
                on[var] += t - 1 - la[var]
            la[var] = t - 1
            st[var] = newv
        if not orbit_moves:
            continue
        c = 0
        for j in range(nctx):
            c |= st[ctx[j]] << j
        if exact_orbit is not None:
            new_st = exact_orbit(c, st, rng)
            for x in range(len(st)):
                if new_st[x] != st[x]:
                    if st[x]:
                        on[x] += t - 1 - la[x]
                    la[x] = t - 1
                    st[x] = new_st[x]
            continue
        k = kslots[c]
        if k == 0:
            continue
        rows = slot_rows[c]
        sup = supports[c]
        i = int(rnd() * k)
        j = int(rnd() * (k - 1))
        if j >= i:
            j += 1
        if rnd() < 0.5:
            a, b = rows[i], rows[j]
        else:
            a, b = rows[j], rows[i]
        new = rows[i].copy()
        new[sup] = a[b[sup]]
        rows[i][:] = new
        perm = new.tolist()
        tmp = {x: st[x] for x in sup.tolist()}
        for x, val in tmp.items():
            y = perm[x]
            oldy = tmp[y]
            if val != oldy:
                if oldy:
                    on[y] += t - 1 - la[y]
                la[y] = t - 1
                st[y] = val

    state[:] = st
    ones[:] = on
    last[:] = la
    return t
