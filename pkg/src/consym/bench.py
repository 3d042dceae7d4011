"""Experiment harness: ground truth, KL-vs-time curves and control sweeps.

A run compares several chain kinds on one model.  Every (chain, repeat) pair
is an independent chain with its own seed; its marginal estimates are scored
against the ground truth at every recording point.  The per-run rows go to
``runs.csv`` and the per-chain mean curve with normal-approximation 95%
intervals to ``summary.csv``.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import domains
from .errors import ConfigError, ResourceLimitError
from .exact import exact_marginals
from .model import (ORACLE_MAX_VARS, Context, Evidence, Model, dump_assignment,
                    dump_model, exact_distribution, marginals_from_table)
from .samplers import KINDS, ChainConfig, run_chain

TRUTH_MODES = ("auto", "exact", "eliminate", "reference")
SWEEP_AXES = ("size", "evidence", "posterior", "alpha")
KL_EPS = 1e-6
Z95 = 1.959963984540054
REFERENCE_STEPS = 10_000_000
POSTERIOR_TOL = 0.02

_SIZE_PARAM = {"sports": "num_students", "young_old": "num_people"}
_PRIOR_PARAM = {"sports": "sport_prior", "young_old": "young_prior"}
# predicates never used as evidence in the evidence sweep
_NO_EVIDENCE_PREFIXES = {"sports": (), "young_old": ("Friends_",)}


# -- ground truth and scoring ---------------------------------------------------

def truth_mode_for(model: Model, evidence: Context = Evidence(), mode: str = "auto") -> str:
    """The concrete mode ``auto`` resolves to (cheap: no inference is run)."""
    if mode not in TRUTH_MODES:
        raise ConfigError(f"unknown ground-truth mode {mode!r}")
    if mode != "auto":
        return mode
    return "exact" if model.n <= ORACLE_MAX_VARS else "eliminate"


def ground_truth(model: Model, evidence: Context = Evidence(), mode: str = "auto",
                 reference_steps: int = REFERENCE_STEPS, seed: int = 0) -> np.ndarray:
    """``P(X_i = 1 | evidence)`` for every variable.

    ``exact`` enumerates all states (n <= 20), ``eliminate`` uses the exact
    elimination oracle, ``reference`` runs a long Gibbs chain.  ``auto``
    picks enumeration when it fits, then elimination, then the reference
    chain when elimination exceeds its scale guard.
    """
    resolved = truth_mode_for(model, evidence, mode)
    if resolved == "exact":
        probs = exact_distribution(model, evidence=evidence if evidence else None)
        return marginals_from_table(probs, model.n)
    if resolved == "eliminate":
        try:
            return exact_marginals(model, evidence)
        except ResourceLimitError:
            if mode != "auto":
                raise
    cfg = ChainConfig(kind="gibbs", evidence=evidence, seed=seed, max_steps=reference_steps,
                      record_every_steps=reference_steps)
    return run_chain(model, cfg).final_marginals


def kl_terms(truth, estimate, eps: float = KL_EPS) -> np.ndarray:
    """Per-variable ``KL(Bernoulli(truth) || Bernoulli(estimate))``, both clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(truth, dtype=np.float64), eps, 1.0 - eps)
    q = np.clip(np.asarray(estimate, dtype=np.float64), eps, 1.0 - eps)
    if p.shape != q.shape:
        raise ConfigError(f"truth has {p.size} variables, estimate {q.size}")
    return p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))


def kl_score(truth, estimate, evidence: Context = Evidence(), eps: float = KL_EPS) -> float:
    """Unweighted mean KL over the non-evidence variables."""
    terms = kl_terms(truth, estimate, eps)
    keep = np.ones(terms.size, dtype=bool)
    keep[list(evidence.variables)] = False
    return float(terms[keep].mean()) if keep.any() else 0.0


def mean_ci(values) -> tuple[float, float, float]:
    """Mean and normal-approximation 95% interval."""
    v = np.asarray(values, dtype=np.float64)
    m = float(v.mean())
    if v.size < 2:
        return m, m, m
    h = Z95 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return m, m - h, m + h


# -- experiment specification ---------------------------------------------------

@dataclass(frozen=True)
class ChainSpec:
    kind: str = "gibbs"
    alpha: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown chain kind {self.kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return f"con_mcmc({self.alpha:g})" if self.kind == "con_mcmc" else self.kind


@dataclass(frozen=True)
class ExperimentSpec:
    """One comparison: a model, the chains to compare and the measurement plan.

    The model comes from ``domain`` + ``params`` or is given directly as
    ``model`` with ``context_names``.  Exactly one of ``max_seconds`` and
    ``max_steps`` sets the per-chain budget; estimates are scored at
    ``points`` evenly spaced checkpoints of that budget.
    """
    chains: tuple[ChainSpec, ...]
    domain: str | None = None
    params: object = None
    model: Model | None = None
    context_names: tuple[str, ...] = ()
    evidence: dict = field(default_factory=dict)
    evidence_fraction: float = 0.0
    evidence_seed: int = 0
    repeats: int = 20
    max_seconds: float | None = None
    max_steps: int | None = None
    points: int = 10
    truth: str = "auto"
    reference_steps: int = REFERENCE_STEPS
    seed: int = 0
    kernel: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "chains", tuple(self.chains))
        if not self.chains:
            raise ConfigError("an experiment needs at least one chain")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.points < 1:
            raise ConfigError("points must be >= 1")
        if (self.max_seconds is None) == (self.max_steps is None):
            raise ConfigError("set exactly one of max_seconds and max_steps")
        if (self.model is None) == (self.domain is None):
            raise ConfigError("give either a domain or a model")
        if self.domain is not None:
            if self.domain not in domains.DOMAINS:
                raise ConfigError(f"unknown domain {self.domain!r}")
            if self.params is None:
                object.__setattr__(self, "params", domains.DOMAINS[self.domain][0]())
        if not 0.0 <= self.evidence_fraction < 1.0:
            raise ConfigError("evidence_fraction must lie in [0, 1)")
        if self.truth not in TRUTH_MODES:
            raise ConfigError(f"unknown ground-truth mode {self.truth!r}")
        labels = [c.label for c in self.chains]
        if len(set(labels)) != len(labels):
            raise ConfigError("chain labels must be unique")

    @property
    def schedule(self) -> np.ndarray:
        budget = self.max_seconds if self.max_seconds is not None else self.max_steps
        return budget * np.arange(1, self.points + 1) / self.points

    def echo(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("model", "params", "chains")}
        d["chains"] = [asdict(c) for c in self.chains]
        if self.params is not None:
            d["params"] = asdict(self.params)
        if self.model is not None:
            d["model_sha1"] = hashlib.sha1(dump_model(self.model).encode()).hexdigest()
        return d


def spec_digest(spec: ExperimentSpec) -> str:
    return hashlib.sha1(json.dumps(spec.echo(), sort_keys=True).encode()).hexdigest()[:12]


def random_evidence(model: Model, fraction: float, seed: int, exclude=(),
                    skip_prefixes=()) -> Evidence:
    """Observe ``round(fraction * eligible)`` variables at values of a Gibbs sample.

    Values come from a short Gibbs run on the model so the evidence is
    plausible rather than arbitrary.
    """
    if fraction <= 0:
        return Evidence()
    excluded = set(exclude)
    eligible = [v for v, name in enumerate(model.names)
                if v not in excluded and not name.startswith(tuple(skip_prefixes))]
    rng = np.random.default_rng([seed, 11])
    k = int(round(fraction * len(eligible)))
    chosen = sorted(int(v) for v in rng.choice(eligible, size=k, replace=False))
    cfg = ChainConfig(kind="gibbs", seed=seed, max_steps=50 * model.n, record_every_steps=50 * model.n)
    state = run_chain(model, cfg).final_state
    return Evidence(tuple((v, int(state[v])) for v in chosen))


@dataclass(frozen=True)
class Problem:
    model: Model
    context_vars: tuple[int, ...]
    evidence: Evidence


def resolve(spec: ExperimentSpec) -> Problem:
    if spec.model is not None:
        model = spec.model
        ctx = tuple(model.var(name) for name in spec.context_names)
    else:
        model, ctx = domains.generate(spec.domain, spec.params)
        if spec.context_names:
            ctx = tuple(model.var(name) for name in spec.context_names)
    if spec.evidence and spec.evidence_fraction:
        raise ConfigError("give explicit evidence or an evidence fraction, not both")
    if spec.evidence:
        evidence = Evidence.from_names(model, spec.evidence)
    else:
        skip = _NO_EVIDENCE_PREFIXES.get(spec.domain, ())
        evidence = random_evidence(model, spec.evidence_fraction, spec.evidence_seed,
                                   exclude=ctx, skip_prefixes=skip)
    if set(ctx) & evidence.variables:
        raise ConfigError("context variables may not be observed")
    return Problem(model, ctx, evidence)


def chain_seed(spec: ExperimentSpec, chain_index: int, repeat: int) -> int:
    return int(np.random.SeedSequence([spec.seed, chain_index, repeat]).generate_state(1)[0])


def chain_config(spec: ExperimentSpec, problem: Problem, chain_index: int, repeat: int) -> ChainConfig:
    c = spec.chains[chain_index]
    kw = {}
    if spec.max_seconds is not None:
        kw = dict(max_seconds=spec.max_seconds, record_every_seconds=spec.max_seconds / spec.points)
    else:
        kw = dict(max_steps=spec.max_steps, record_every_steps=max(1, spec.max_steps // spec.points))
    return ChainConfig(kind=c.kind, alpha=c.alpha,
                       context_vars=problem.context_vars if c.kind == "con_mcmc" else (),
                       evidence=problem.evidence, seed=chain_seed(spec, chain_index, repeat), **kw)


# -- running ---------------------------------------------------------------------

@dataclass
class RunTrace:
    chain: str
    config_hash: str
    repeat: int
    seed: int
    steps: list[int]
    seconds: list[float]
    kl: list[float]
    symmetry_seconds: float


def _run_one(args) -> RunTrace:
    spec, problem, truth, ci, r = args
    cfg = chain_config(spec, problem, ci, r)
    rec = run_chain(problem.model, cfg, kernel=spec.kernel)
    kls = [kl_score(truth, m, problem.evidence) for m in rec.marginals]
    # the seed has its own column; the hash identifies the chain setup
    return RunTrace(spec.chains[ci].label, replace(cfg, seed=0).digest(), r, cfg.seed, list(rec.steps),
                    list(rec.seconds), kls, rec.symmetry_seconds)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    truth: np.ndarray
    truth_mode: str
    runs: list[RunTrace]

    def labels(self) -> list[str]:
        return [c.label for c in self.spec.chains]

    def final_kl(self, label: str) -> np.ndarray:
        return np.array([t.kl[-1] for t in self.runs if t.chain == label])

    def kl_at(self, trace: RunTrace, k: int) -> float:
        """KL of ``trace`` at checkpoint ``k``: its latest record at or before it."""
        if k == self.spec.points - 1:
            return trace.kl[-1]
        x = trace.seconds if self.spec.max_seconds is not None else trace.steps
        limit = self.spec.schedule[k]
        best = None
        for xi, v in zip(x, trace.kl):
            if xi <= limit * (1 + 1e-9):
                best = v
        return float("nan") if best is None else best

    def summary_rows(self) -> list[dict]:
        rows = []
        for label in self.labels():
            traces = [t for t in self.runs if t.chain == label]
            for k, nominal in enumerate(self.spec.schedule):
                vals = np.array([self.kl_at(t, k) for t in traces])
                vals = vals[~np.isnan(vals)]
                if vals.size == 0:
                    continue
                m, lo, hi = mean_ci(vals)
                rows.append(dict(chain=label, config_hash=traces[0].config_hash, point=k,
                                 budget=float(nominal), mean_kl=m, ci_low=lo, ci_high=hi,
                                 n=int(vals.size)))
        return rows

    def runs_csv(self, include_timing: bool = False) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment {spec_digest(self.spec)}\n")
        buf.write(f"# ground_truth {self.truth_mode}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["chain", "config_hash", "repeat", "seed", "step", "wall_clock_seconds", "kl"])
        for t in self.runs:
            for step, secs, v in zip(t.steps, t.seconds, t.kl):
                w.writerow([t.chain, t.config_hash, t.repeat, t.seed, step,
                            f"{secs:.6f}" if include_timing else "", repr(v)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment {spec_digest(self.spec)}\n")
        buf.write(f"# budget_unit {'seconds' if self.spec.max_seconds is not None else 'steps'}\n")
        cols = ["chain", "config_hash", "point", "budget", "mean_kl", "ci_low", "ci_high", "n"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for row in self.summary_rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def write(self, out_dir, include_timing: bool = False) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "runs.csv").write_text(self.runs_csv(include_timing), encoding="utf-8")
        (out / "summary.csv").write_text(self.summary_csv(), encoding="utf-8")
        (out / "experiment.json").write_text(
            json.dumps(self.spec.echo(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
        return out


def cached_truth(problem: Problem, spec: ExperimentSpec, cache_dir=None) -> tuple[np.ndarray, str]:
    mode = truth_mode_for(problem.model, problem.evidence, spec.truth)
    key = hashlib.sha1((dump_model(problem.model) + dump_assignment(problem.model, problem.evidence)
                        + f"{spec.truth}:{spec.reference_steps}:{spec.seed}").encode()).hexdigest()[:16]
    path = Path(cache_dir) / f"truth-{key}.npy" if cache_dir is not None else None
    if path is not None and path.exists():
        return np.load(path), mode
    truth = ground_truth(problem.model, problem.evidence, spec.truth, spec.reference_steps, spec.seed)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, truth)
    return truth, mode


def run_experiment(spec: ExperimentSpec, workers: int = 1, truth: np.ndarray | None = None,
                   truth_cache=None, progress=None) -> ExperimentResult:
    """Run every (chain, repeat) pair and score it against the ground truth.

    ``progress(trace)`` is called as each run finishes.  With ``workers > 1``
    runs execute in a process pool; under a wall-clock budget that is only
    fair if each worker has a core of its own.
    """
    problem = resolve(spec)
    mode = truth_mode_for(problem.model, problem.evidence, spec.truth)
    if truth is None:
        truth, mode = cached_truth(problem, spec, truth_cache)
    tasks = [(spec, problem, truth, ci, r) for r in range(spec.repeats)
             for ci in range(len(spec.chains))]
    runs: list[RunTrace] = []
    if workers <= 1:
        for task in tasks:
            runs.append(_run_one(task))
            if progress:
                progress(runs[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for trace in pool.map(_run_one, tasks):
                runs.append(trace)
                if progress:
                    progress(trace)
    order = {c.label: i for i, c in enumerate(spec.chains)}
    runs.sort(key=lambda t: (order[t.chain], t.repeat))
    return ExperimentResult(spec, truth, mode, runs)


# -- sweeps ----------------------------------------------------------------------

def context_posterior(spec: ExperimentSpec) -> float:
    problem = resolve(spec)
    truth = ground_truth(problem.model, problem.evidence, spec.truth, spec.reference_steps, spec.seed)
    return float(truth[problem.context_vars[0]])


def tune_posterior(spec: ExperimentSpec, target: float, tol: float = POSTERIOR_TOL,
                   bounds: tuple[float, float] = (-40.0, 40.0)) -> tuple[ExperimentSpec, float]:
    """Set the context prior weight so the context marginal is within ``tol`` of ``target``."""
    if spec.domain is None:
        raise ConfigError("posterior tuning needs a domain spec")
    if not 0.0 < target < 1.0:
        raise ConfigError("target posterior must lie in (0, 1)")
    key = _PRIOR_PARAM[spec.domain]

    def at(w):
        return replace(spec, params=replace(spec.params, **{key: round(float(w), 6)}))

    def gap(w):
        p = min(max(context_posterior(at(w)), 1e-12), 1 - 1e-12)
        return math.log(p / (1 - p)) - math.log(target / (1 - target))

    lo, hi = bounds
    if gap(lo) > 0 or gap(hi) < 0:
        raise ConfigError(f"target posterior {target} is out of reach of the prior weight")
    # the marginal is monotone in the prior weight
    w = brentq(gap, lo, hi, xtol=1e-4)
    tuned = at(w)
    achieved = context_posterior(tuned)
    if abs(achieved - target) > tol:
        raise ConfigError(f"posterior tuning reached {achieved:.4f}, target {target}")
    return tuned, achieved


def sweep_specs(spec: ExperimentSpec, axis: str, values) -> list[tuple[float, ExperimentSpec, str]]:
    """Expand ``spec`` over one axis: ``(value, spec, note)`` per point."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    out = []
    for v in values:
        note = ""
        if axis == "size":
            if spec.domain is None:
                raise ConfigError("size sweeps need a domain spec")
            p = replace(spec.params, **{_SIZE_PARAM[spec.domain]: int(v)})
            point = replace(spec, params=p)
        elif axis == "evidence":
            point = replace(spec, evidence={}, evidence_fraction=float(v))
        elif axis == "posterior":
            point, achieved = tune_posterior(spec, float(v))
            note = f"posterior={achieved:.4f};{_PRIOR_PARAM[spec.domain]}={getattr(point.params, _PRIOR_PARAM[spec.domain])}"
        else:
            point = replace(spec, chains=(ChainSpec("con_mcmc", float(v)),))
        out.append((v, point, note))
    return out


def run_sweep(spec: ExperimentSpec, axis: str, values, out_dir, workers: int = 1,
              include_timing: bool = False, truth_cache=None, progress=None) -> Path:
    """One sub-directory per point plus ``index.csv`` listing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v, point, note in sweep_specs(spec, axis, values):
        sub = out / f"{axis}-{v:g}"
        res = run_experiment(point, workers=workers, truth_cache=truth_cache, progress=progress)
        res.write(sub, include_timing)
        for label in res.labels():
            m, lo, hi = mean_ci(res.final_kl(label))
            rows.append([axis, f"{v:g}", sub.name, label, repr(m), repr(lo), repr(hi), note])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["axis", "value", "directory", "chain", "final_mean_kl", "ci_low", "ci_high", "note"])
    w.writerows(rows)
    (out / "index.csv").write_text(buf.getvalue(), encoding="utf-8")
    return out / "index.csv"


# -- spec files ------------------------------------------------------------------

_EXPERIMENT_KEYS = {"domain": str, "config": str, "repeats": int, "seconds": float, "steps": int,
                    "points": int, "truth": str, "reference_steps": int, "seed": int,
                    "evidence_fraction": float, "evidence_seed": int, "context": str,
                    "kernel": str}


def parse_spec(text: str, base_dir=None) -> ExperimentSpec:
    """Read an experiment spec file.

    ``[experiment]`` holds the run settings, ``[params]`` domain parameter
    overrides, ``[evidence]`` explicit ``name = 0|1`` observations, and each
    ``[chain NAME]`` section one chain (``kind``, ``alpha``).
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"spec file: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigError("spec file needs an [experiment] section")
    exp = dict(cp["experiment"])
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"unknown [experiment] key {key!r}")
    try:
        vals = {k: _EXPERIMENT_KEYS[k](v) for k, v in exp.items()}
    except ValueError as exc:
        raise ConfigError(f"[experiment]: {exc}") from None
    domain = vals.get("domain")
    params = None
    if "config" in vals:
        path = domains.resolve_config_path(vals["config"], base_dir)
        domain, params = domains.load_params(path, domain)
    if domain is None:
        raise ConfigError("[experiment] needs a domain or a config file")
    if params is None:
        params = domains.DOMAINS[domain][0]()
    if cp.has_section("params"):
        cls = domains.DOMAINS[domain][0]
        over = {k: domains._coerce(cls, k, v) for k, v in cp["params"].items()}
        params = replace(params, **over)
    evidence = {}
    if cp.has_section("evidence"):
        for k, v in cp["evidence"].items():
            if v not in ("0", "1"):
                raise ConfigError(f"[evidence] {k}: expected 0 or 1")
            evidence[k] = int(v)
    chains = []
    for sec in cp.sections():
        if sec.startswith("chain"):
            name = sec[5:].strip()
            kw = dict(cp[sec])
            unknown = set(kw) - {"kind", "alpha"}
            if unknown:
                raise ConfigError(f"[{sec}]: unknown keys {sorted(unknown)}")
            try:
                chains.append(ChainSpec(kw.get("kind", "gibbs"), float(kw.get("alpha", 0.0)), name))
            except ValueError as exc:
                raise ConfigError(f"[{sec}]: {exc}") from None
        elif sec not in ("experiment", "params", "evidence"):
            raise ConfigError(f"unknown section [{sec}]")
    ctx = tuple(s.strip() for s in vals["context"].split(",")) if "context" in vals else ()
    return ExperimentSpec(
        chains=tuple(chains), domain=domain, params=params, context_names=ctx, evidence=evidence,
        evidence_fraction=vals.get("evidence_fraction", 0.0), evidence_seed=vals.get("evidence_seed", 0),
        repeats=vals.get("repeats", 20), max_seconds=vals.get("seconds"), max_steps=vals.get("steps"),
        points=vals.get("points", 10), truth=vals.get("truth", "auto"),
        reference_steps=vals.get("reference_steps", REFERENCE_STEPS), seed=vals.get("seed", 0),
        kernel=vals.get("kernel"))


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    return parse_spec(path.read_text(encoding="utf-8"), base_dir=path.parent)
