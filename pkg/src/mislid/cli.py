"""``bench`` command line: run experiments, compute lower bounds, re-summarize results."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .bounds import characteristic_value, sample_complexity_floor
from .model import dump_problem, load_problem


def _cmd_run(args) -> int:
    spec = bench.ExperimentSpec.from_file(args.spec)
    instance, _, query = bench.build_problem(spec)
    results = bench.run_monte_carlo(spec, jobs=args.jobs)
    meta = bench.experiment_meta(spec, instance, query)
    paths = bench.emit_report(results, args.out, meta=meta)
    summary = json.loads(paths["summary"].read_text())
    print(json.dumps(summary["algorithms"], indent=2))
    n_bad = sum(r.incomplete for r in results)
    if n_bad and not args.allow_incomplete:
        print(f"{n_bad} run(s) flagged incomplete", file=sys.stderr)
        return 2
    return 0


def _cmd_lower_bound(args) -> int:
    instance, model = load_problem(args.instance)
    if args.epsilon is not None:
        model = model.with_epsilon(args.epsilon)
    res = characteristic_value(instance, model, args.m, tol=args.tol, method=args.method)
    out = {
        "h_mu": res.h_mu,
        "floor": sample_complexity_floor(res.h_mu, args.delta),
        "omega_star": res.omega_star.tolist(),
        "gap": res.gap,
        "iterations": res.iterations,
        "converged": res.converged,
    }
    print(json.dumps(out, indent=2))
    return 0 if res.converged else 3


def _cmd_report(args) -> int:
    results = bench.load_results(args.input)
    if args.format == "csv":
        sys.stdout.write(bench.to_csv(results))
    else:
        print(json.dumps(bench.summarize(results), indent=2))
    return 0


def _cmd_instance(args) -> int:
    if args.experiment == "a":
        instance, model, _ = bench.gen_experiment_a(args.seed, args.epsilon, args.normalization)
    else:
        instance, model, _ = bench.gen_experiment_b(args.seed, args.epsilon, args.epsilon_star, args.normalization)
    dump_problem(args.out, instance, model)
    print(f"wrote {args.out} (gap {bench.instance_gap(instance.mu, 3):.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Top-m identification experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec and write jsonl/csv/summary")
    r.add_argument("--spec", required=True, help="experiment spec (JSON)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--jobs", type=int, default=None, help=f"worker processes (env {bench.JOBS_ENV} overrides)")
    r.add_argument("--allow-incomplete", action="store_true", help="exit 0 even if some runs hit the cap")
    r.set_defaults(func=_cmd_run)

    lb = sub.add_parser("lower-bound", help="characteristic value and sample-complexity floor")
    lb.add_argument("--instance", required=True, help="problem file (JSON with features, mu, epsilon)")
    lb.add_argument("--m", type=int, required=True)
    lb.add_argument("--delta", type=float, default=0.05)
    lb.add_argument("--tol", type=float, default=1e-6)
    lb.add_argument("--epsilon", type=float, default=None, help="override the file's deviation budget")
    lb.add_argument("--method", choices=["cutting-plane", "adahedge"], default="cutting-plane")
    lb.set_defaults(func=_cmd_lower_bound)

    rep = sub.add_parser("report", help="re-emit results from a run directory")
    rep.add_argument("--in", dest="input", required=True, help="run directory or runs.jsonl")
    rep.add_argument("--format", choices=["csv", "summary"], default="summary")
    rep.set_defaults(func=_cmd_report)

    ins = sub.add_parser("instance", help="write a generated instance to a problem file")
    ins.add_argument("--experiment", choices=["a", "b"], default="a")
    ins.add_argument("--seed", type=int, required=True)
    ins.add_argument("--epsilon", type=float, default=0.0, help="deviation (a) or model budget (b)")
    ins.add_argument("--epsilon-star", type=float, default=1.0, help="true deviation for experiment b")
    ins.add_argument("--normalization", choices=["matrix", "row"], default="matrix")
    ins.add_argument("--out", required=True)
    ins.set_defaults(func=_cmd_instance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
