"""Compiled vs pure-Python sampling kernel: throughput and agreement.

    python3 benchmarks/bench_kernels.py [--steps N] [--python-steps N] [--csv PATH]

Both kernels consume the same random stream, so after the same number of
steps they must report identical marginals; the script checks that before
timing anything.
"""
import argparse
import csv
import sys
import time

import numpy as np

from consym import domains
from consym.kernel import compiled_kernel
from consym.samplers import ChainConfig, SymmetryCache, run_chain

CHAINS = [("gibbs", 0.0), ("orbital", 0.0), ("con_mcmc", 0.0), ("con_mcmc", 0.01)]


def problems():
    yield "movie", domains.movie_model(), (0,)
    for name, single in [("sports", False), ("sports", True), ("young_old", False), ("young_old", True)]:
        model, ctx = domains.generate(name, domains.default_params(name, single))
        yield name + ("_single" if single else ""), model, ctx


def timed(model, config, cache, kernel):
    t0 = time.perf_counter()
    rec = run_chain(model, config, cache, kernel=kernel)
    return rec, time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2_000_000, help="steps per compiled run")
    ap.add_argument("--python-steps", type=int, default=100_000, help="steps per Python run")
    ap.add_argument("--check-steps", type=int, default=20_000, help="steps for the agreement check")
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args(argv)
    if compiled_kernel is None:
        sys.exit("compiled kernel is not built; run pip install -e . --no-build-isolation")

    rows = []
    for label, model, ctx in problems():
        cache = SymmetryCache(model, ctx)
        for kind, alpha in CHAINS:
            base = dict(kind=kind, alpha=alpha, context_vars=ctx, seed=1)
            check = ChainConfig(max_steps=args.check_steps, **base)
            a = run_chain(model, check, cache, kernel="python").final_marginals
            b = run_chain(model, check, cache, kernel="cython").final_marginals
            agree = bool(np.array_equal(a, b))
            _, tc = timed(model, ChainConfig(max_steps=args.steps, **base), cache, "cython")
            _, tp = timed(model, ChainConfig(max_steps=args.python_steps, **base), cache, "python")
            c_rate, p_rate = args.steps / tc, args.python_steps / tp
            rows.append(dict(problem=label, chain=kind, alpha=alpha, cython_steps_per_s=round(c_rate),
                             python_steps_per_s=round(p_rate), speedup=round(c_rate / p_rate, 1),
                             identical=agree))
            print(f"{label:18s} {kind:9s} a={alpha:<5g} cython {c_rate / 1e6:7.2f} M/s  "
                  f"python {p_rate / 1e3:8.1f} k/s  x{c_rate / p_rate:6.1f}  identical={agree}",
                  flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0 if all(r["identical"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
