"""Gibbs, Orbital MCMC and contextual (Con-MCMC) chains.

All three chains share one step: a single-site Gibbs update of either a
random free variable or, with probability ``alpha``, a random context
variable; the symmetry-aware chains then move uniformly (approximately, via
product replacement, or exactly, via orbit enumeration) within the orbit of
the intermediate state under the symmetry group of that state's context.
Gibbs uses no orbit move; Orbital MCMC uses the group of the empty context.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import kernel as _kernels
from ._pykernel import blanket_tables, sigmoid
from .autgroup import SEARCH_NODE_BUDGET, contextual_automorphisms
from .errors import ConfigError, ResourceLimitError
from .model import Context, Evidence, Model, log_weights_all
from .permgroup import (PR_BURN_IN, PR_SLOTS, PermGroup, PrSampler,
                        exact_uniform_orbit_sample, key_state, sample_orbit,
                        sorted_orbit)

KINDS = ("gibbs", "orbital", "con_mcmc")
ORBIT_SAMPLERS = ("product_replacement", "exact")
MAX_CONTEXT_VARS = 8
MATRIX_MAX_VARS = 12


@dataclass(frozen=True)
class ChainConfig:
    kind: str = "gibbs"
    alpha: float = 0.0
    context_vars: tuple[int, ...] = ()
    evidence: Context = Evidence()
    seed: int = 0
    max_steps: int | None = None
    max_seconds: float | None = None
    record_every_steps: int | None = None
    record_every_seconds: float | None = None
    burn_in: int = 0
    orbit_sampler: str = "product_replacement"
    pr_slots: int = PR_SLOTS
    pr_burn_in: int = PR_BURN_IN

    def __post_init__(self):
        object.__setattr__(self, "context_vars", tuple(int(v) for v in self.context_vars))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown chain kind {self.kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.orbit_sampler not in ORBIT_SAMPLERS:
            raise ConfigError(f"unknown orbit sampler {self.orbit_sampler!r}")
        if len(set(self.context_vars)) != len(self.context_vars):
            raise ConfigError("context variables repeated")
        if set(self.context_vars) & self.evidence.variables:
            raise ConfigError("context variables overlap the evidence")
        if len(self.context_vars) > MAX_CONTEXT_VARS:
            raise ConfigError(f"at most {MAX_CONTEXT_VARS} context variables are supported")
        if self.kind == "con_mcmc" and not self.context_vars and self.alpha > 0:
            raise ConfigError("alpha > 0 needs at least one context variable to flip")
        if self.max_steps is None and self.max_seconds is None:
            raise ConfigError("set max_steps and/or max_seconds")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")

    @property
    def effective_alpha(self) -> float:
        return self.alpha if self.kind == "con_mcmc" else 0.0

    @property
    def effective_context(self) -> tuple[int, ...]:
        return self.context_vars if self.kind == "con_mcmc" else ()

    @property
    def label(self) -> str:
        if self.kind == "con_mcmc":
            return f"con_mcmc({self.alpha:g})"
        return self.kind

    def echo(self) -> dict:
        d = asdict(self)
        d["evidence"] = [list(b) for b in self.evidence.bindings]
        d["context_vars"] = list(self.context_vars)
        return d

    def digest(self) -> str:
        return hashlib.sha1(json.dumps(self.echo(), sort_keys=True).encode()).hexdigest()[:12]


def free_variables(model: Model, evidence: Context) -> np.ndarray:
    fixed = evidence.variables
    return np.array([v for v in range(model.n) if v not in fixed], dtype=np.int32)


def context_of(index: int, context_vars) -> Context:
    return Context(tuple((v, (index >> j) & 1) for j, v in enumerate(context_vars)))


def context_index(state, context_vars) -> int:
    c = 0
    for j, v in enumerate(context_vars):
        c |= int(state[v]) << j
    return c


class SymmetryCache:
    """Contextual symmetry group and product-replacement sampler per context of ``V``.

    Context ``c`` binds ``context_vars[j]`` to bit ``j`` of ``c``.
    """

    def __init__(self, model: Model, context_vars=(), evidence: Context = Evidence(),
                 seed: int = 0, slots: int = PR_SLOTS, burn_in: int = PR_BURN_IN,
                 budget: int = SEARCH_NODE_BUDGET):
        context_vars = tuple(int(v) for v in context_vars)
        if len(context_vars) > MAX_CONTEXT_VARS:
            raise ConfigError(f"at most {MAX_CONTEXT_VARS} context variables are supported")
        t0 = time.monotonic()
        self.model = model
        self.context_vars = context_vars
        self.evidence = evidence
        self.groups: list[PermGroup] = []
        self.samplers: list[PrSampler] = []
        for c in range(1 << len(context_vars)):
            group = contextual_automorphisms(model, context_of(c, context_vars), evidence, budget)
            self.groups.append(group)
            self.samplers.append(PrSampler(group, slots, seed=[seed, c], burn_in=burn_in))
        self.seconds = time.monotonic() - t0

    @classmethod
    def for_config(cls, model: Model, config: ChainConfig) -> "SymmetryCache | None":
        if config.kind == "gibbs":
            return None
        return cls(model, config.effective_context, config.evidence,
                   seed=config.seed, slots=config.pr_slots, burn_in=config.pr_burn_in)

    def __len__(self):
        return len(self.groups)

    def context(self, c: int) -> Context:
        return context_of(c, self.context_vars)

    def index(self, state) -> int:
        return context_index(state, self.context_vars)

    def group_for(self, state) -> PermGroup:
        return self.groups[self.index(state)]


# -- single steps (reference semantics, same draw order as the kernels) --------

def gibbs_conditional(model: Model, state, var: int) -> float:
    """``P(X_var = 1 | rest)`` from the clauses touching ``var``."""
    d = 0.0
    for k in model.var_clauses[var]:
        c = model.clauses[k]
        sign = None
        other = False
        for v, s in c.literals:
            if v == var:
                sign = s
            elif bool(state[v]) == s:
                other = True
        if not other:
            d += c.weight if sign else -c.weight
    return sigmoid(d)


def _gibbs_update(model, state, var, rng):
    out = np.array(state, dtype=np.uint8, copy=True)
    p = gibbs_conditional(model, out, var)
    out[var] = 1 if rng.random() < p else 0
    return out


def gibbs_step(model: Model, state, rng: np.random.Generator,
               evidence: Context = Evidence()) -> np.ndarray:
    """Random-scan single-site Gibbs over the non-evidence variables."""
    free = free_variables(model, evidence)
    var = int(free[int(rng.random() * len(free))])
    return _gibbs_update(model, state, var, rng)


def _orbit_move(group, state, rng, sampler, context):
    if sampler is None:
        return exact_uniform_orbit_sample(group, state, rng, context)
    return sample_orbit(group, state, sampler, rng)


def orbital_step(model: Model, state, group: PermGroup, rng: np.random.Generator,
                 sampler: PrSampler | None = None,
                 evidence: Context = Evidence()) -> np.ndarray:
    """Gibbs move, then a uniform move in the orbit (exact unless ``sampler`` given)."""
    mid = gibbs_step(model, state, rng, evidence)
    return _orbit_move(group, mid, rng, sampler, Context())


def con_mcmc_step(model: Model, state, cache: SymmetryCache, alpha: float,
                  rng: np.random.Generator, exact: bool = True) -> np.ndarray:
    """One Con-MCMC(alpha) transition.

    With probability ``alpha`` Gibbs-resample a random context variable, else a
    base Gibbs move; then move within the contextual orbit of the intermediate
    state, under the group of the context that state is in.
    """
    V = cache.context_vars
    if not V and alpha > 0:
        raise ConfigError("alpha > 0 needs at least one context variable to flip")
    if alpha > 0.0 and rng.random() < alpha:
        var = V[int(rng.random() * len(V))]
        mid = _gibbs_update(model, state, var, rng)
    else:
        mid = gibbs_step(model, state, rng, cache.evidence)
    c = cache.index(mid)
    sampler = None if exact else cache.samplers[c]
    return _orbit_move(cache.groups[c], mid, rng, sampler, cache.context(c))


# -- kernel plumbing ---------------------------------------------------------------

class KernelData:
    """Flat arrays consumed by both sampling kernels."""

    def __init__(self, model: Model, config: ChainConfig, cache: SymmetryCache | None):
        n = model.n
        self.n = n
        vc = model.var_clauses
        self.vc_ptr = np.zeros(n + 1, dtype=np.int32)
        self.vc_ptr[1:] = np.cumsum([len(t) for t in vc])
        self.vc_clause = np.array([k for t in vc for k in t], dtype=np.int32)
        sign = []
        for v, t in enumerate(vc):
            for k in t:
                sign.append(next(s for u, s in model.clauses[k].literals if u == v))
        self.vc_sign = np.array(sign, dtype=np.uint8)
        self.cl_ptr = np.zeros(len(model.clauses) + 1, dtype=np.int32)
        self.cl_ptr[1:] = np.cumsum([len(c.literals) for c in model.clauses])
        self.lit_var = np.array([v for c in model.clauses for v, _ in c.literals], dtype=np.int32)
        self.lit_pos = np.array([s for c in model.clauses for _, s in c.literals], dtype=np.uint8)
        self.weights = np.array([c.weight for c in model.clauses], dtype=np.float64)
        self.free = free_variables(model, config.evidence)
        if len(self.free) == 0:
            raise ConfigError("every variable is evidence; nothing to sample")
        self.ctx_vars = np.array(config.effective_context, dtype=np.int32)
        self.alpha = float(config.effective_alpha)
        self.orbit_moves = config.kind != "gibbs"
        if self.orbit_moves and cache is None:
            raise ConfigError(f"{config.kind} chain needs a SymmetryCache")
        samplers = cache.samplers if self.orbit_moves else []
        ncontexts = max(1, len(samplers))
        kmax = max([s.k for s in samplers] + [1])
        self.slots = np.tile(np.arange(n, dtype=np.int32), (ncontexts, kmax, 1))
        self.kslots = np.zeros(ncontexts, dtype=np.int32)
        self.supports = []
        for c, s in enumerate(samplers):
            if not s.trivial:
                self.slots[c, :s.k] = s.slots
                self.kslots[c] = s.k
            self.supports.append(s.support.astype(np.intp))
        if not self.supports:
            self.supports.append(np.zeros(0, dtype=np.intp))
        self.sup_ptr = np.zeros(ncontexts + 1, dtype=np.int32)
        self.sup_ptr[1:] = np.cumsum([len(s) for s in self.supports])
        self.sup = np.concatenate(self.supports).astype(np.int32) if self.sup_ptr[-1] else \
            np.zeros(0, dtype=np.int32)
        self.scratch = np.zeros(n, dtype=np.uint8)
        self.perm_scratch = np.zeros(n, dtype=np.int32)

    @cached_property
    def py_tables(self):
        return blanket_tables(self.vc_ptr, self.vc_clause, self.vc_sign, self.cl_ptr,
                              self.lit_var, self.lit_pos, self.weights)


@dataclass
class RunRecord:
    """Marginal estimates of one chain at its recording points."""

    names: tuple[str, ...]
    config: ChainConfig
    kernel: str
    symmetry_seconds: float
    steps: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    marginals: list[np.ndarray] = field(default_factory=list)
    stop_reason: str = ""
    final_state: np.ndarray | None = None

    @property
    def final_marginals(self) -> np.ndarray:
        return self.marginals[-1]

    def header_lines(self) -> list[str]:
        return [f"# config {json.dumps(self.config.echo(), sort_keys=True)}",
                f"# config_hash {self.config.digest()}",
                f"# seed {self.config.seed}"]

    def write_csv(self, fh, run_id: int = 0, include_timing: bool = True,
                  header: bool = True) -> None:
        """Rows ``run_id,step,wall_clock_seconds,variable,marginal_estimate``.

        Without ``include_timing`` the clock column is left empty so that
        step-budgeted runs serialise byte-identically.
        """
        if header:
            for line in self.header_lines():
                fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["run_id", "step", "wall_clock_seconds", "variable", "marginal_estimate"])
        for step, secs, marg in zip(self.steps, self.seconds, self.marginals):
            clock = f"{secs:.6f}" if include_timing else ""
            for name, p in zip(self.names, marg):
                w.writerow([run_id, step, clock, name, repr(float(p))])

    def to_csv(self, **kw) -> str:
        buf = io.StringIO()
        self.write_csv(buf, **kw)
        return buf.getvalue()


class Chain:
    """Mutable chain state: one per run, never shared."""

    def __init__(self, model: Model, config: ChainConfig, cache: SymmetryCache | None = None,
                 kernel: str | None = None, data: KernelData | None = None):
        self.model = model
        self.config = config
        if cache is None and config.kind != "gibbs":
            cache = SymmetryCache.for_config(model, config)
        self.cache = cache
        exact = config.kind != "gibbs" and config.orbit_sampler == "exact"
        self.kernel = _kernels.get_kernel("python" if exact else kernel)
        self.data = data if data is not None else KernelData(model, config, cache)
        self.slots = self.data.slots.copy()
        self.rng = np.random.default_rng(config.seed)
        state = self.rng.integers(0, 2, model.n).astype(np.uint8)
        for v, x in config.evidence.bindings:
            state[v] = x
        self.state = state
        self.ones = np.zeros(model.n, dtype=np.int64)
        self.last = np.zeros(model.n, dtype=np.int64)
        self.t = 0
        self.base = 0
        self._orbits: dict = {}
        self.exact_orbit = self._exact_orbit if exact else None

    def _exact_orbit(self, c, st, rng):
        key = (c, bytes(st))
        members = self._orbits.get(key)
        if members is None:
            members = sorted_orbit(self.cache.groups[c], np.array(st, dtype=np.uint8),
                                   self.cache.context(c))
            for m in members:
                self._orbits[(c, m)] = members
        if len(members) == 1:
            return st
        return key_state(members[int(rng.random() * len(members))]).tolist()

    def advance(self, nsteps: int) -> None:
        if nsteps > 0:
            self.t = self.kernel.run_steps(self.data, self.state, self.slots, self.ones,
                                           self.last, self.t, nsteps, self.rng, self.exact_orbit)

    def reset_estimates(self) -> None:
        self.ones[:] = 0
        self.last[:] = self.t
        self.base = self.t

    @property
    def samples(self) -> int:
        return self.t - self.base

    def marginals(self) -> np.ndarray:
        n = self.samples
        if n == 0:
            return self.state.astype(np.float64)
        return (self.ones + (self.t - self.last) * self.state) / n


def run_chain(model: Model, config: ChainConfig, cache: SymmetryCache | None = None,
              kernel: str | None = None, data: KernelData | None = None) -> RunRecord:
    """Run one chain to its step or wall-clock budget, recording marginal estimates.

    The clock includes the symmetry computation (``cache.seconds``), whether the
    cache was built here or passed in.
    """
    if cache is None and config.kind != "gibbs":
        cache = SymmetryCache.for_config(model, config)
    offset = cache.seconds if cache is not None else 0.0
    t0 = time.monotonic()
    chain = Chain(model, config, cache, kernel, data)
    rec = RunRecord(model.names, config, chain.kernel.IMPLEMENTATION, offset)

    def elapsed():
        return offset + time.monotonic() - t0

    if config.burn_in:
        chain.advance(config.burn_in)
        chain.reset_estimates()

    max_steps = config.max_steps
    max_secs = config.max_seconds
    every = config.record_every_steps
    if every is None and max_secs is None:
        every = max(1, max_steps // 10)
    interval = config.record_every_seconds
    if interval is None and max_secs is not None:
        interval = max_secs / 10
    next_step = every
    next_time = interval
    chunk = 1 << 20 if max_secs is None else 1024

    def record():
        rec.steps.append(chain.samples)
        rec.seconds.append(elapsed())
        rec.marginals.append(chain.marginals())

    while True:
        n = chunk
        if max_steps is not None:
            n = min(n, max_steps - chain.samples)
        if next_step is not None:
            n = min(n, next_step - chain.samples)
        c0 = time.monotonic()
        chain.advance(n)
        dt = time.monotonic() - c0
        now = elapsed()
        if next_step is not None and chain.samples >= next_step:
            record()
            next_step += every
        if next_time is not None and now >= next_time:
            record()
            while next_time <= now:
                next_time += interval
        if max_steps is not None and chain.samples >= max_steps:
            rec.stop_reason = "steps"
            break
        if max_secs is not None and now >= max_secs:
            rec.stop_reason = "time"
            break
        if max_secs is not None:
            # keep chunks near 5 ms so time budgets overshoot little
            rate = n / dt if dt > 0 else float(n) * 1e4
            chunk = int(min(max(rate * 0.005, 16), 1 << 22))
    if not rec.steps or rec.steps[-1] != chain.samples:
        record()
    rec.final_state = chain.state.copy()
    return rec


# -- exact transition matrices ----------------------------------------------

def _single_site_matrix(lw: np.ndarray, var: int) -> sp.csr_matrix:
    N = len(lw)
    idx = np.arange(N, dtype=np.int64)
    bit = 1 << var
    s1 = idx | bit
    s0 = idx & ~bit
    d = lw[s1] - lw[s0]
    p1 = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                  np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    rows = np.concatenate([idx, idx])
    cols = np.concatenate([s1, s0])
    vals = np.concatenate([p1, 1.0 - p1])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def _mean_site_matrix(lw: np.ndarray, variables) -> sp.csr_matrix:
    N = len(lw)
    acc = sp.csr_matrix((N, N))
    for v in variables:
        acc = acc + _single_site_matrix(lw, int(v))
    return acc / len(variables)


def _permute_indices(idx: np.ndarray, image, n: int) -> np.ndarray:
    out = np.zeros_like(idx)
    for i in range(n):
        out |= ((idx >> i) & 1) << image[i]
    return out


def contextual_orbit_labels(model: Model, cache: SymmetryCache) -> np.ndarray:
    """Component label of every state: states share a label iff they share a contextual orbit."""
    n = model.n
    N = 1 << n
    idx = np.arange(N, dtype=np.int64)
    ctx = np.zeros(N, dtype=np.int64)
    for j, v in enumerate(cache.context_vars):
        ctx |= ((idx >> v) & 1) << j
    rows, cols = [idx], [idx]
    for c, group in enumerate(cache.groups):
        members = idx[ctx == c]
        for g in group.generators:
            rows.append(members)
            cols.append(_permute_indices(members, g.image, n))
    r = np.concatenate(rows)
    graph = sp.csr_matrix((np.ones(len(r)), (r, np.concatenate(cols))), shape=(N, N))
    _, labels = connected_components(graph, directed=True, connection="weak")
    return labels


def orbit_averaging_matrix(labels: np.ndarray) -> sp.csr_matrix:
    """Row ``s`` is uniform over the orbit containing ``s``."""
    N = len(labels)
    order = np.argsort(labels, kind="stable")
    rows, cols, vals = [], [], []
    sorted_labels = labels[order]
    bounds = np.flatnonzero(np.diff(sorted_labels)) + 1
    for block in np.split(order, bounds):
        m = len(block)
        rows.append(np.repeat(block, m))
        cols.append(np.tile(block, m))
        vals.append(np.full(m * m, 1.0 / m))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N))


def component_matrices(model: Model, config: ChainConfig,
                       cache: SymmetryCache | None = None) -> dict[str, sp.csr_matrix]:
    """Exact pieces of the transition kernel.

    ``base``: random-scan Gibbs over free variables; ``ctx``: Gibbs on a
    uniformly chosen context variable (absent when there are none);
    ``orbit``: uniform move within the contextual orbit (absent for Gibbs).
    """
    n = model.n
    if n > MATRIX_MAX_VARS:
        raise ResourceLimitError(f"transition matrix limited to {MATRIX_MAX_VARS} variables")
    lw = log_weights_all(model)
    out = {"base": _mean_site_matrix(lw, free_variables(model, config.evidence))}
    V = config.effective_context
    if V:
        out["ctx"] = _mean_site_matrix(lw, V)
    if config.kind != "gibbs":
        if cache is None:
            cache = SymmetryCache.for_config(model, config)
        out["orbit"] = orbit_averaging_matrix(contextual_orbit_labels(model, cache))
    return out


def exact_transition_matrix(model: Model, config: ChainConfig,
                            cache: SymmetryCache | None = None,
                            parts: dict | None = None) -> sp.csr_matrix:
    """``2**n x 2**n`` transition matrix of the chain with exact uniform orbit moves."""
    if config.kind != "gibbs" and config.orbit_sampler != "exact":
        raise ConfigError("the exact transition matrix needs orbit_sampler='exact'")
    parts = parts if parts is not None else component_matrices(model, config, cache)
    a = config.effective_alpha
    step1 = parts["base"] if a == 0 else a * parts["ctx"] + (1 - a) * parts["base"]
    if "orbit" in parts:
        return (step1 @ parts["orbit"]).tocsr()
    return step1.tocsr()


def stationarity_residual(P, pi: np.ndarray) -> float:
    """``max |pi P - pi|``."""
    return float(np.max(np.abs(P.T @ pi - pi)))
