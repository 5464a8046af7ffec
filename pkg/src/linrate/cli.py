"""Command-line benchmark and experiment driver.

Subcommands:
  run <config.json>        run a configured sweep, write a JSON record
  recommend <descriptor>   map a generator-structure descriptor to a method
  list-models              print the model zoo
  selftest                 quick end-to-end sanity checks
"""

import argparse
import json
import os
import sys


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        pass  # env vars cover fresh pools; set them before startup for BLAS


def _cmd_run(args):
    from .bench import ExperimentConfig, run_experiment

    config = ExperimentConfig.load(args.config)
    record = run_experiment(
        config,
        out_path=args.out,
        reps=args.reps,
        quiet=args.quiet,
    )
    failures = [p for p in record["points"] if p["error"]]
    if not args.quiet:
        out = args.out or config.output
        print(f"wrote {out} ({len(record['points'])} points, {len(failures)} failed)")
    return 0


def _cmd_recommend(args):
    from .bench import recommend

    with open(args.descriptor) as fh:
        descriptor = json.load(fh)
    result = recommend(descriptor)
    print(f"{result['method']}: {result['rationale']}")
    return 0


def _cmd_list_models(args):
    from .models import zoo_names

    for name in zoo_names():
        print(name)
    return 0


def _cmd_selftest(args):
    import numpy as np

    from . import series
    from .closure import bd_geometric_tail, closure_solve
    from .models import MatrixTelegraphModel, model_zoo
    from .stationary import block_thomas_stationary
    from .telegraph import binomial_thinning_half

    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:
            checks.append((name, False, str(exc)))

    def series_identity():
        a = np.array([1.0, 1.0, 0.0])
        assert np.array_equal(series.cauchy_product(a, series.delta_window(2)), a)

    def closure_vs_tail():
        out = closure_solve(
            model_zoo("binary_bd", {"lam": 1.0, "mu": 2.0}),
            series.delta_window(1, at=1),
            48,
            1.0,
            rtol=1e-11,
        )
        assert np.abs(out - bd_geometric_tail(1.0, 2.0, 1.0, 48)).sum() < 1e-9

    def thinning_mass():
        P = np.random.default_rng(0).uniform(0, 1, (2, 30))
        out = binomial_thinning_half(P, 1.0, 0.37)
        assert np.allclose(out.sum(axis=1), P.sum(axis=1), atol=1e-12)

    def thomas_poisson():
        model = MatrixTelegraphModel(A=np.array([[-2.0]]), B=np.array([[2.0]]), mu=1.0)
        res = block_thomas_stationary(model, 20)
        assert abs(res.distribution[0, 0] - np.exp(-2.0)) < 1e-10

    check("series multiplicative identity", series_identity)
    check("scalar closure vs geometric tail", closure_vs_tail)
    check("binomial thinning conserves row mass", thinning_mass)
    check("block-Thomas Poisson fixed point", thomas_poisson)

    ok = True
    for name, passed, msg in checks:
        status = "PASS" if passed else f"FAIL ({msg})"
        if not args.quiet or not passed:
            print(f"{status}: {name}")
        ok &= passed
    return 0 if ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="linrate",
        description="Benchmark driver for linear-rate hierarchy solvers",
    )
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output JSON path (overrides config)")
    p_run.add_argument("--reps", type=int, default=None, help="timed repetitions (best-of)")
    p_run.set_defaults(func=_cmd_run)

    p_rec = sub.add_parser("recommend", help="method selection from a descriptor")
    p_rec.add_argument("descriptor")
    p_rec.set_defaults(func=_cmd_recommend)

    p_list = sub.add_parser("list-models", help="print the model zoo")
    p_list.set_defaults(func=_cmd_list_models)

    p_self = sub.add_parser("selftest", help="quick sanity checks")
    p_self.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    if args.threads is not None:
        _set_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
