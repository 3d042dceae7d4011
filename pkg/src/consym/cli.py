"""Command-line entry point: ``consym {gen,symmetries,sample,bench,oracle}``.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 a resource
guard was hit.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, domains
from .autgroup import contextual_automorphisms
from .errors import ConfigError, ConsymError, DimensionError, ModelError, ResourceLimitError
from .exact import exact_marginals
from .model import (Context, Evidence, exact_distribution, load_assignment,
                    load_model, marginals_from_table, save_model)
from .samplers import KINDS, ChainConfig, exact_transition_matrix, run_chain, stationarity_residual

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3
HELP_WIDTH = 88


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kw):
        kw.setdefault("formatter_class", lambda prog: argparse.HelpFormatter(prog, width=HELP_WIDTH))
        super().__init__(*args, **kw)

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _bindings(text: str | None, model, cls=Context) -> Context:
    """``A=1,B=0`` -> assignment."""
    if not text:
        return cls()
    values = {}
    for part in text.split(","):
        name, sep, val = part.strip().partition("=")
        if not sep or val.strip() not in ("0", "1"):
            raise ModelError(f"bad binding {part!r}; expected NAME=0|1")
        values[name.strip()] = int(val)
    return cls.from_names(model, values)


def _names(text: str | None, model) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(model.var(n.strip()) for n in text.split(",") if n.strip())


def _echo(**items) -> None:
    print("# config " + json.dumps(items, sort_keys=True, default=str))


def _load_problem(args):
    """Model, context variables and evidence from ``--model``/``--sidecar`` flags."""
    if getattr(args, "movie", False):
        model, ctx, ev = domains.movie_model(), (0,), Evidence()
    else:
        if not args.model:
            raise UsageError("--model is required (or --movie)")
        model = load_model(args.model)
        ctx, ev = (), Evidence()
        if args.sidecar:
            ctx, ev = domains.parse_sidecar(Path(args.sidecar).read_text(encoding="utf-8"), model)
    if args.context_vars:
        ctx = _names(args.context_vars, model)
    if args.evidence:
        ev = load_assignment(args.evidence, model, Evidence)
    return model, ctx, ev


# -- subcommands -------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.domain == "movie":
        if args.config or args.set or args.single:
            raise UsageError("the movie model takes no parameters")
        model, ctx, text = domains.movie_model(), (0,), "domain=movie\n"
    else:
        if args.config:
            _, params = domains.load_params(domains.resolve_config_path(args.config), args.domain)
        else:
            params = domains.default_params(args.domain, args.single)
        cls = type(params)
        over = {}
        for item in args.set or []:
            key, sep, val = item.partition("=")
            if not sep:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            over[key.strip()] = domains._coerce(cls, key.strip(), val.strip())
        if args.single:
            over["single_side"] = True
        params = replace(params, **over)
        model, ctx = domains.generate(args.domain, params)
        text = domains.params_to_text(args.domain, params)
    _echo(command="gen", domain=args.domain, out=args.out, variables=model.n, clauses=len(model.clauses))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out.with_suffix(".model"))
    out.with_suffix(".ctx").write_text(domains.context_sidecar(model, ctx), encoding="utf-8")
    out.with_suffix(".cfg").write_text(text, encoding="utf-8")
    print(f"wrote {out.with_suffix('.model')} {out.with_suffix('.ctx')} {out.with_suffix('.cfg')}")
    return EXIT_OK


def cmd_symmetries(args) -> int:
    model = load_model(args.model)
    context = _bindings(args.context, model)
    evidence = load_assignment(args.evidence, model, Evidence) if args.evidence else Evidence()
    _echo(command="symmetries", model=args.model, context=args.context or "", evidence=args.evidence or "")
    group = contextual_automorphisms(model, context, evidence)
    names = model.names if args.names else None
    print(f"# generators {len(group.generators)}")
    for g in group.generators:
        print(g.cycle_notation(names))
    return EXIT_OK


def cmd_sample(args) -> int:
    model, ctx, ev = _load_problem(args)
    if args.steps is None and args.seconds is None:
        raise UsageError("give --steps and/or --seconds")
    cfg = ChainConfig(kind=args.kind, alpha=args.alpha, context_vars=ctx if args.kind == "con_mcmc" else (),
                      evidence=ev, seed=args.seed, max_steps=args.steps, max_seconds=args.seconds,
                      record_every_steps=args.record_every, burn_in=args.burn_in)
    _echo(command="sample", **cfg.echo(), kernel=args.kernel or "auto", out=args.out)
    rec = run_chain(model, cfg, kernel=args.kernel)
    text = rec.to_csv(include_timing=args.timing)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        print(f"wrote {args.out} ({len(rec.steps)} records, {rec.steps[-1]} steps, kernel {rec.kernel})")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = bench.load_spec(args.spec)
    spec = replace(spec, seed=args.seed)
    if args.repeats is not None:
        spec = replace(spec, repeats=args.repeats)
    _echo(command="bench", spec=args.spec, seed=args.seed, workers=args.workers, out=args.out,
          sweep=args.sweep or "", values=args.values or "", resolved=spec.echo())

    def progress(trace):
        if not args.quiet:
            print(f"  {trace.chain} repeat {trace.repeat}: final KL {trace.kl[-1]:.4g}", flush=True)

    if args.sweep:
        if not args.values:
            raise UsageError("--sweep needs --values")
        values = [float(v) for v in args.values.split(",")]
        index = bench.run_sweep(spec, args.sweep, values, args.out, args.workers, args.timing,
                                args.truth_cache, progress)
        print(f"wrote {index}")
        return EXIT_OK
    res = bench.run_experiment(spec, workers=args.workers, truth_cache=args.truth_cache, progress=progress)
    out = res.write(args.out, args.timing)
    for label in res.labels():
        m, lo, hi = bench.mean_ci(res.final_kl(label))
        print(f"{label:>18s}  final mean KL {m:.4e}  95% CI [{lo:.4e}, {hi:.4e}]")
    print(f"wrote {out / 'runs.csv'} {out / 'summary.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    model, ctx, ev = _load_problem(args)
    if not (args.stationarity or args.distribution):
        raise UsageError("choose --stationarity and/or --distribution")
    _echo(command="oracle", model=args.model or "movie", kind=args.kind, alpha=args.alpha,
          context=[model.names[v] for v in ctx], evidence=[[model.names[v], x] for v, x in ev.bindings])
    pi = exact_distribution(model, evidence=ev if ev else None)
    if args.distribution:
        marg = marginals_from_table(pi, model.n)
        elim = exact_marginals(model, ev)
        print(f"normalisation residual {abs(pi.sum() - 1.0):.3e}")
        print(f"elimination vs enumeration max |diff| {np.max(np.abs(marg - elim)):.3e}")
        for name, p in zip(model.names, marg):
            print(f"  {name} {p:.12f}")
    if args.stationarity:
        cfg = ChainConfig(kind=args.kind, alpha=args.alpha, context_vars=ctx if args.kind == "con_mcmc" else (),
                          evidence=ev, seed=0, max_steps=1, orbit_sampler="exact")
        P = exact_transition_matrix(model, cfg)
        print(f"stationarity residual {stationarity_residual(P, pi):.3e}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _problem_flags(p, movie: bool = False) -> None:
    p.add_argument("--model", help="model file")
    p.add_argument("--sidecar", help="context/evidence sidecar written by gen")
    p.add_argument("--context-vars", help="comma-separated context variable names")
    p.add_argument("--evidence", help="evidence file with NAME=0|1 lines")
    if movie:
        p.add_argument("--movie", action="store_true", help="use the built-in movie model (context G)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="consym", description="Contextual symmetries and Con-MCMC sampling.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("gen", help="write a benchmark domain as model, sidecar and parameter files")
    p.add_argument("--domain", required=True, choices=sorted(domains.DOMAINS) + ["movie"])
    p.add_argument("--config", help="parameter file (key=value lines) or a shipped config name")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter")
    p.add_argument("--single", action="store_true", help="single-side variant")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX.model/.ctx/.cfg")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("symmetries", help="print contextual symmetry generators in cycle notation")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--context", help="context bindings, e.g. R=0,S=1")
    p.add_argument("--evidence", help="evidence file with NAME=0|1 lines")
    p.add_argument("--names", action="store_true", help="print variable names instead of ids")
    p.set_defaults(func=cmd_symmetries)

    p = sub.add_parser("sample", help="run one chain and write its marginal estimates as CSV")
    _problem_flags(p, movie=True)
    p.add_argument("--kind", choices=KINDS, default="gibbs", help="chain type (default gibbs)")
    p.add_argument("--alpha", type=float, default=0.0,
                   help="probability of a context-variable move (con_mcmc only)")
    p.add_argument("--seed", type=int, required=True, help="random seed")
    p.add_argument("--steps", type=int, help="step budget")
    p.add_argument("--seconds", type=float, help="wall-clock budget (output then depends on speed)")
    p.add_argument("--record-every", type=int, help="record every N steps")
    p.add_argument("--burn-in", type=int, default=0, help="steps run before estimates start")
    p.add_argument("--kernel", choices=("cython", "python"), help="force a kernel implementation")
    p.add_argument("--timing", action="store_true", help="fill the wall-clock column")
    p.add_argument("--out", required=True, help="CSV path or - for stdout")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bench", help="run an experiment spec (or a sweep of it)")
    p.add_argument("--spec", required=True, help="experiment spec file")
    p.add_argument("--seed", type=int, required=True, help="base seed for every run")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--repeats", type=int, help="override the number of repeats")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--sweep", choices=bench.SWEEP_AXES, help="sweep one axis")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--truth-cache", help="directory caching ground-truth marginals")
    p.add_argument("--timing", action="store_true", help="fill the wall-clock column")
    p.add_argument("--quiet", action="store_true", help="no per-run progress lines")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="exact distribution and transition-matrix checks (n <= 12)")
    _problem_flags(p, movie=True)
    p.add_argument("--kind", choices=KINDS, default="con_mcmc", help="chain type (default con_mcmc)")
    p.add_argument("--alpha", type=float, default=0.0, help="context-move probability")
    p.add_argument("--stationarity", action="store_true", help="print max |pi P - pi|")
    p.add_argument("--distribution", action="store_true", help="print exact marginals")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip() + "\nconsym: error: a command is required")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"consym: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ModelError, ConfigError, DimensionError, ConsymError, OSError, ValueError) as exc:
        print(f"consym: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
